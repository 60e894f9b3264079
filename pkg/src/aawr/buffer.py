"""Transition records, replay buffers and the line-delimited episode format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from aawr.pomdp import PAD


class SchemaError(ValueError):
    """A record file does not match the expected layout."""


@dataclass(frozen=True)
class Transition:
    episode_id: int
    t: int
    o: int
    o_p: tuple[float, ...] | None
    a: int
    r: float
    o_next: int
    o_p_next: tuple[float, ...] | None
    done: bool
    s: int | None = None
    s_next: int | None = None

    def to_record(self) -> dict:
        rec = {
            "episode_id": self.episode_id,
            "t": self.t,
            "o": self.o,
            "o_p": None if self.o_p is None else list(self.o_p),
            "a": self.a,
            "r": self.r,
            "o_next": self.o_next,
            "o_p_next": None if self.o_p_next is None else list(self.o_p_next),
            "done": self.done,
        }
        if self.s is not None:
            rec["s"] = self.s
            rec["s_next"] = self.s_next
        return rec


_REQUIRED = ("episode_id", "t", "o", "a", "r", "o_next", "done")
_INT_FIELDS = ("episode_id", "t", "o", "a", "o_next")


def transition_from_record(rec: dict, privileged: bool) -> Transition:
    missing = [f for f in _REQUIRED if f not in rec]
    if privileged:
        missing += [f for f in ("o_p", "o_p_next") if rec.get(f) is None]
    if missing:
        raise SchemaError(f"missing fields {missing}")
    for f in _INT_FIELDS:
        if not isinstance(rec[f], int) or isinstance(rec[f], bool):
            raise SchemaError(f"field {f!r} must be an integer")
    if not isinstance(rec["done"], bool):
        raise SchemaError("field 'done' must be a boolean")

    def vec(v):
        return None if v is None else tuple(float(x) for x in v)

    return Transition(
        episode_id=rec["episode_id"],
        t=rec["t"],
        o=rec["o"],
        o_p=vec(rec.get("o_p")),
        a=rec["a"],
        r=float(rec["r"]),
        o_next=rec["o_next"],
        o_p_next=vec(rec.get("o_p_next")),
        done=rec["done"],
        s=rec.get("s"),
        s_next=rec.get("s_next"),
    )


def episode_success(episode: Sequence[Transition]) -> bool:
    """An episode succeeds when it ends on a positive terminal reward."""
    return bool(episode) and episode[-1].done and episode[-1].r > 0


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


class ReplayBuffer:
    """Transition store with episode boundaries and sliding-window agent states.

    Windows ``z`` and ``z_next`` are reconstructed from each episode as it is
    added, so samples carry everything the critics and the policy need.
    When ``capacity`` is exceeded the oldest transitions are overwritten.
    """

    def __init__(self, k: int, privileged_dim: int | None, capacity: int = 100_000, store_state: bool = True):
        self.k = k
        self.privileged_dim = privileged_dim
        self.capacity = int(capacity)
        self.store_state = store_state
        n = self.capacity
        self.o = np.zeros(n, dtype=np.int64)
        self.a = np.zeros(n, dtype=np.int64)
        self.r = np.zeros(n)
        self.o_next = np.zeros(n, dtype=np.int64)
        self.done = np.zeros(n, dtype=bool)
        self.episode_id = np.zeros(n, dtype=np.int64)
        self.t = np.zeros(n, dtype=np.int64)
        self.s = np.full(n, -1, dtype=np.int64)
        self.s_next = np.full(n, -1, dtype=np.int64)
        self.z = np.zeros((n, k, 2), dtype=np.int64)
        self.z_next = np.zeros((n, k, 2), dtype=np.int64)
        d = privileged_dim or 0
        self.o_p = np.zeros((n, d))
        self.o_p_next = np.zeros((n, d))
        self.size = 0
        self._cursor = 0
        self.n_episodes = 0
        # kept for exact export; trimmed alongside ring overwrites
        self._episodes: list[list[Transition]] = []

    def __len__(self) -> int:
        return self.size

    @property
    def episodes(self) -> list[list[Transition]]:
        return self._episodes

    def add_episode(self, episode: Sequence[Transition]) -> None:
        if not episode:
            return
        if self.privileged_dim is not None and any(tr.o_p is None or tr.o_p_next is None for tr in episode):
            raise SchemaError("privileged buffer requires o_p and o_p_next on every transition")
        window = [(PAD, PAD)] * (self.k - 1) + [(episode[0].o, PAD)]
        for tr in episode:
            i = self._cursor
            self.z[i] = window
            window = window[1:] + [(tr.o_next, tr.a)]
            self.z_next[i] = window
            self.o[i], self.a[i], self.r[i] = tr.o, tr.a, tr.r
            self.o_next[i], self.done[i] = tr.o_next, tr.done
            self.episode_id[i], self.t[i] = tr.episode_id, tr.t
            if self.store_state and tr.s is not None:
                self.s[i], self.s_next[i] = tr.s, tr.s_next
            if self.privileged_dim is not None:
                self.o_p[i] = tr.o_p
                self.o_p_next[i] = tr.o_p_next
            self._cursor = (self._cursor + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)
        self._episodes.append(list(episode))
        self.n_episodes += 1
        total = sum(len(e) for e in self._episodes)
        while total > self.capacity:
            total -= len(self._episodes.pop(0))

    def add_episodes(self, episodes: Iterable[Sequence[Transition]]) -> None:
        for ep in episodes:
            self.add_episode(ep)

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def success_indices(self) -> np.ndarray:
        """Indices of transitions that belong to successful episodes."""
        ok = set()
        ep = self.episode_id[: self.size]
        last = {}
        for i in range(self.size):
            last[ep[i]] = i
        for e, i in last.items():
            if self.done[i] and self.r[i] > 0:
                ok.add(e)
        return np.flatnonzero(np.isin(ep, list(ok))) if ok else np.zeros(0, dtype=np.int64)


def export_buffer(buffer: ReplayBuffer | Sequence[Sequence[Transition]], path) -> None:
    episodes = buffer.episodes if isinstance(buffer, ReplayBuffer) else buffer
    with open(path, "w") as fh:
        for ep in episodes:
            for tr in ep:
                fh.write(json.dumps(tr.to_record()) + "\n")


def read_episodes(path, privileged: bool = False) -> list[list[Transition]]:
    episodes: list[list[Transition]] = []
    current: list[Transition] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tr = transition_from_record(json.loads(line), privileged)
            except (json.JSONDecodeError, SchemaError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            if current and tr.episode_id != current[-1].episode_id:
                episodes.append(current)
                current = []
            current.append(tr)
    if current:
        episodes.append(current)
    return episodes


def ingest_demos(path, k: int, privileged: bool = True, capacity: int | None = None) -> ReplayBuffer:
    episodes = read_episodes(path, privileged=privileged)
    dim = None
    if privileged and episodes:
        dim = len(episodes[0][0].o_p)
    elif privileged:
        dim = 0
    n = sum(len(e) for e in episodes)
    buf = ReplayBuffer(k, dim, capacity=capacity or max(n, 1))
    buf.add_episodes(episodes)
    return buf

