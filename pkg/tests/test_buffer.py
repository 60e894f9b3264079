import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aawr import envs
from aawr.buffer import (
    ReplayBuffer, SchemaError, Transition, discounted_returns, episode_success, export_buffer, ingest_demos,
    read_episodes,
)
from aawr.pomdp import PAD


def records(episodes):
    return [[t.to_record() for t in ep] for ep in episodes]


def test_round_trip_grid_dataset(tmp_path):
    entry = envs.hidden_target_grid()
    eps = envs.scripted_demo_rollouts(entry, 100, seed=4)
    path = tmp_path / "d.jsonl"
    export_buffer(eps, path)
    back = read_episodes(path, privileged=True)
    assert records(back) == records(eps)
    buf = ingest_demos(path, k=3)
    path2 = tmp_path / "d2.jsonl"
    export_buffer(buf, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_empty_file(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    buf = ingest_demos(path, k=2)
    assert len(buf) == 0


def test_missing_privileged_fields(tmp_path):
    rec = Transition(0, 0, 1, None, 0, 0.0, 1, None, True).to_record()
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(SchemaError):
        ingest_demos(path, k=1, privileged=True)
    assert len(ingest_demos(path, k=1, privileged=False)) == 1


def test_malformed_line_reports_line_number(tmp_path):
    good = json.dumps(Transition(0, 0, 1, (1.0,), 0, 0.0, 1, (1.0,), False).to_record())
    path = tmp_path / "bad.jsonl"
    path.write_text(good + "\n{not json\n")
    with pytest.raises(SchemaError, match=":2:"):
        read_episodes(path)


def test_windows_reconstructed():
    ep = [Transition(0, t, o, None, a, 0.0, o2, None, t == 2) for t, (o, a, o2) in enumerate([(5, 1, 6), (6, 0, 7), (7, 2, 8)])]
    buf = ReplayBuffer(k=2, privileged_dim=None)
    buf.add_episode(ep)
    assert buf.z[0].tolist() == [[PAD, PAD], [5, PAD]]
    assert buf.z_next[0].tolist() == [[5, PAD], [6, 1]]
    assert buf.z[2].tolist() == [[6, 1], [7, 0]]
    assert buf.z_next[2].tolist() == [[7, 0], [8, 2]]


def test_ring_overwrite_keeps_valid_indices():
    entry = envs.tiger()
    eps = envs.scripted_demo_rollouts(entry, 50, seed=0)
    buf = ReplayBuffer(k=2, privileged_dim=entry.privileged_dim, capacity=30)
    buf.add_episodes(eps)
    assert len(buf) == 30
    assert sum(len(e) for e in buf.episodes) <= 30
    rows = buf.sample_indices(np.random.default_rng(0), 1000)
    assert rows.min() >= 0 and rows.max() < 30


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 4))
def test_done_flags_end_episodes(seed, k):
    entry = envs.camouflage_line()
    eps = envs.scripted_demo_rollouts(entry, 5, seed=seed)
    buf = ReplayBuffer(k, entry.privileged_dim)
    buf.add_episodes(eps)
    ids = buf.episode_id[: len(buf)]
    done = buf.done[: len(buf)]
    # a done flag appears exactly at each episode's last transition
    last = np.r_[ids[1:] != ids[:-1], True]
    np.testing.assert_array_equal(done, last)


def test_success_indices():
    entry = envs.tiger()
    eps = envs.scripted_demo_rollouts(entry, 40, seed=2)
    buf = ReplayBuffer(2, entry.privileged_dim)
    buf.add_episodes(eps)
    ok_ids = {ep[0].episode_id for ep in eps if episode_success(ep)}
    rows = buf.success_indices()
    assert set(buf.episode_id[rows].tolist()) == ok_ids
    assert len(rows) == sum(len(ep) for ep in eps if episode_success(ep))


def test_privileged_buffer_rejects_missing():
    buf = ReplayBuffer(1, privileged_dim=2)
    with pytest.raises(SchemaError):
        buf.add_episode([Transition(0, 0, 0, None, 0, 0.0, 0, None, True)])


def test_discounted_returns():
    np.testing.assert_allclose(discounted_returns([0, 0, 1], 0.5), [0.25, 0.5, 1.0])
