import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aawr import envs, losses, nn, oracle
from aawr.envs import ConfigError
from aawr.losses import Batch, TrainingConfig
from aawr.pomdp import build_env_agent_mdp
from aawr.verify import fit_expectile
from conftest import loss_gradient_errors


def const_net(values, n_in=1):
    """Linear net whose output on any input of zeros is ``values``."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    return nn.MlpParams([np.zeros((n_in, len(values)))], [values.copy()])


def scalar_batch(n=1, a=None, r=None, done=None, mode="privileged"):
    x = np.zeros((n, 1))
    a = np.zeros(n, dtype=np.int64) if a is None else np.asarray(a)
    r = np.zeros(n) if r is None else np.asarray(r, dtype=np.float64)
    done = np.zeros(n) if done is None else np.asarray(done, dtype=np.float64)
    return Batch(mode, x, x, x, a, r, done)


# ---------------------------------------------------------------- config


def test_config_defaults_and_validation():
    cfg = TrainingConfig()
    assert (cfg.beta, cfg.batch_size, cfg.lr_actor, cfg.tau) == (10.0, 256, 1e-4, 0.7)
    for bad in [dict(beta=0), dict(tau=1.0), dict(gamma=1.0), dict(weight_clip=0.5), dict(batch_size=3)]:
        with pytest.raises(ConfigError):
            TrainingConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        TrainingConfig.from_dict({"nope": 1})


# ---------------------------------------------------------------- critic losses


def test_q_td_examples():
    b = scalar_batch(r=[1.0])
    assert losses.q_td_loss(b, const_net([1.0]), const_net([0.0]), gamma=0.0).loss == 0.0
    b = scalar_batch(r=[0.0])
    assert losses.q_td_loss(b, const_net([5.0]), const_net([10.0]), gamma=0.9).loss == pytest.approx(16.0)


def test_q_td_terminal_drops_bootstrap():
    b = scalar_batch(r=[2.0], done=[1.0])
    assert losses.q_td_loss(b, const_net([5.0]), const_net([10.0]), gamma=0.9).loss == pytest.approx(9.0)


def test_expectile_examples():
    b = scalar_batch()
    assert losses.v_expectile_loss(b, const_net([1.0]), const_net([2.0]), 0.5).loss == pytest.approx(0.5)
    assert losses.v_expectile_loss(b, const_net([3.0]), const_net([2.0]), 0.9).loss == pytest.approx(0.1)
    with pytest.raises(ValueError):
        losses.v_expectile_loss(b, const_net([3.0]), const_net([2.0]), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.floats(-5, 5))
def test_expectile_half_is_half_squared(qs, v):
    n = len(qs)
    q = nn.MlpParams([np.zeros((1, n))], [np.asarray(qs)])
    b = scalar_batch(n, a=np.arange(n))
    res = losses.v_expectile_loss(b, const_net([v]), q, 0.5)
    assert res.loss == pytest.approx(0.5 * np.mean((np.asarray(qs) - v) ** 2), abs=1e-12)


def test_expectile_regression_fixed_points():
    assert fit_expectile([0.0, 10.0], 0.7) == pytest.approx(7.0, abs=0.01)
    assert fit_expectile([0.0, 10.0], 0.5) == pytest.approx(5.0, abs=0.01)


def test_expectile_scalar_oracle():
    from scipy.optimize import minimize_scalar

    vals = np.array([0.0, 1.0, 4.0, 10.0])
    for tau in (0.3, 0.8):
        res = minimize_scalar(lambda v: np.mean(np.where(vals - v < 0, 1 - tau, tau) * (vals - v) ** 2))
        assert fit_expectile(vals, tau, steps=4000) == pytest.approx(res.x, abs=0.01)


def test_expectile_monotone_in_tau():
    vals = [0.0, 3.0, 10.0]
    fits = [fit_expectile(vals, tau) for tau in (0.5, 0.7, 0.9)]
    assert fits[0] <= fits[1] <= fits[2]


def test_critic_width_mismatch():
    b = scalar_batch()
    with pytest.raises(ValueError):
        losses.q_td_loss(b, const_net([1.0], n_in=2), const_net([0.0]), 0.9)


# ---------------------------------------------------------------- policy losses


def test_zero_advantage_is_bc():
    rng = np.random.default_rng(0)
    pi = nn.mlp_init([3, 4, 5], seed=0)
    x = rng.normal(size=(10, 3))
    b = Batch("privileged", x, x, x, rng.integers(0, 5, 10), np.zeros(10), np.zeros(10))
    aawr = losses.aawr_policy_loss(b, pi, None, None, 1.0, 100.0, advantage=np.zeros(10))
    bc = losses.bc_loss(b, pi)
    assert aawr.loss == pytest.approx(bc.loss, abs=1e-14)
    for g1, g2 in zip(aawr.grads, bc.grads):
        np.testing.assert_allclose(g1, g2, atol=1e-14)


def test_weight_example_and_cap():
    w = losses.advantage_weights(np.array([10.0, 1e6, -1e6]), beta=10.0, weight_clip=100.0)
    assert w[0] == pytest.approx(np.e)
    assert w[1] == pytest.approx(100.0)
    assert 0 < w[2] < 1e-300 or w[2] == 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(0.01, 100), st.floats(1, 1e4))
def test_weights_positive_and_capped(adv, beta, clip):
    w = losses.advantage_weights(np.asarray(adv), beta, clip)
    assert np.all(w >= 0) and np.all(w <= clip * (1 + 1e-12))
    assert np.all(np.isfinite(w))


def test_uniform_bc_loss():
    pi = nn.mlp_init([2, 5], seed=0, zero=True)
    b = scalar_batch(4, a=[0, 1, 2, 3])
    b = Batch("symmetric", np.zeros((4, 2)), np.zeros((4, 2)), np.zeros((4, 2)), b.a, b.r, b.done)
    assert losses.bc_loss(b, pi).loss == pytest.approx(np.log(5))


def test_point_mass_bc_loss():
    pi = nn.MlpParams([np.zeros((1, 3))], [np.array([0.0, 60.0, 0.0])])
    assert losses.bc_loss(scalar_batch(2, a=[1, 1]), pi).loss == pytest.approx(0.0, abs=1e-20)


def test_large_beta_approaches_bc():
    rng = np.random.default_rng(1)
    pi = nn.mlp_init([3, 4], seed=1)
    x = rng.normal(size=(8, 3))
    b = Batch("symmetric", x, x, x, rng.integers(0, 4, 8), np.zeros(8), np.zeros(8))
    adv = rng.normal(size=8)
    bc = losses.bc_loss(b, pi).loss
    assert losses.sawr_policy_loss(b, pi, None, None, 1e8, 100.0, advantage=adv).loss == pytest.approx(bc, abs=1e-6)


def test_mode_guards():
    pi = nn.mlp_init([1, 2], seed=0)
    with pytest.raises(ValueError):
        losses.aawr_policy_loss(scalar_batch(mode="symmetric"), pi, None, None, 1.0, 100.0, np.zeros(1))
    with pytest.raises(ValueError):
        losses.sawr_policy_loss(scalar_batch(mode="privileged"), pi, None, None, 1.0, 100.0, np.zeros(1))


def test_aawr_equals_sawr_on_fully_observed_instance(rng):
    """When the observation is the state, privileged and symmetric advantages coincide."""
    spec = oracle.fully_observed_pomdp(rng)
    mdp = build_env_agent_mdp(spec, 1)
    mu = oracle.random_policy(mdp, rng)
    table, vis = oracle.value_table(mdp, mu)
    adv_sym_joint = table.adv_sym[mdp.joint_z]
    np.testing.assert_allclose(table.adv_priv, adv_sym_joint, atol=1e-10)
    a = oracle.awr_closed_form_update(mu, table.adv_priv, 1.0, vis, kind="aawr")
    s = oracle.awr_closed_form_update(mu, table.adv_sym, 1.0, kind="sawr")
    np.testing.assert_allclose(a[vis.visited_z], s[vis.visited_z], atol=1e-10)


def test_jensen_witness_batch_weights():
    w = oracle.jensen_gap_witness(beta=1.0, a=1.0)
    sym = w["symmetric_instance"]
    # per-state weights of the risky action are e and 1/e, averaging to cosh(1)
    adv = np.asarray(sym["advantages"])[:, 0]
    weights = losses.advantage_weights(adv, 1.0, 100.0)
    assert np.mean(weights) == pytest.approx(np.cosh(1.0), abs=1e-12)
    assert losses.advantage_weights(np.zeros(2), 1.0, 100.0).tolist() == [1.0, 1.0]


def test_tabular_maximizer_matches_closed_form(rng):
    from conftest import random_spec

    spec = random_spec(rng, n_states=2, n_actions=2, n_obs=2)
    mdp = build_env_agent_mdp(spec, 1)
    mu = oracle.random_policy(mdp, rng)
    table, vis = oracle.value_table(mdp, mu)
    closed = oracle.awr_closed_form_update(mu, table.adv_priv, 0.5, vis, kind="aawr")
    numeric = oracle.maximize_awr_objective(mu, table.adv_priv, 0.5, vis)
    assert oracle.total_variation(closed, numeric)[vis.visited_z].max() < 1e-5


# ---------------------------------------------------------------- returns


def test_returns_examples():
    from aawr.buffer import Transition

    def ep(rewards):
        n = len(rewards)
        return [Transition(0, t, 0, None, 0, r, 0, None, t == n - 1) for t, r in enumerate(rewards)]

    assert losses.returns_to_go([ep([1.0])], 0.5).tolist() == [1.0]
    g = losses.returns_to_go([ep([1.0] * 50)], 0.9)
    assert g[0] == pytest.approx((1 - 0.9 ** 50) / 0.1)
    assert g[0] == pytest.approx(9.948, abs=1e-3)
    with pytest.raises(ValueError):
        losses.returns_to_go([ep([1.0, 1.0])[:1]], 0.9)


@pytest.mark.slow
def test_tiger_mc_returns_match_dp():
    """Monte-Carlo returns under the uniform window policy agree with the exact initial value."""
    entry = envs.tiger()
    spec = entry.spec
    mdp = build_env_agent_mdp(spec, 1)
    mu = oracle.uniform_policy(mdp)
    exact = oracle.expected_return(mdp, mu)
    rng = np.random.default_rng(0)
    n = 100_000
    eps = [envs.rollout_episode(entry, lambda s, z, r: r.integers(3), rng, k=1) for _ in range(n)]
    eps = [e for e in eps if e[-1].done]
    starts = np.array([losses.returns_to_go([e], spec.gamma)[0] for e in eps])
    assert abs(starts.mean() - exact) < 3 * starts.std() / np.sqrt(len(starts))


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("seed", range(5))
def test_all_loss_gradients(seed):
    errors = loss_gradient_errors(seed)
    assert max(errors.values()) < 1e-4, errors
