"""The compiled kernels and the pure-Python fallback compute the same things."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aawr import envs, kernels, oracle
from aawr import _kernels_py as py
from aawr.pomdp import build_env_agent_mdp
from conftest import random_spec

compiled = pytest.importorskip("aawr._kernels", reason="compiled extension not built")


@pytest.fixture
def python_backend():
    before = kernels.BACKEND
    kernels.use("python")
    yield
    kernels.use(before)


def build_both(spec, k, with_actions=True):
    before = kernels.BACKEND
    try:
        kernels.use("compiled")
        a = build_env_agent_mdp(spec, k, with_actions)
        kernels.use("python")
        b = build_env_agent_mdp(spec, k, with_actions)
    finally:
        kernels.use(before)
    return a, b


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.booleans())
def test_enumeration_equivalent(seed, k, with_actions):
    spec = random_spec(np.random.default_rng(seed), n_states=3, n_actions=2, n_obs=2)
    a, b = build_both(spec, k, with_actions)
    np.testing.assert_array_equal(a.joint_s, b.joint_s)
    np.testing.assert_array_equal(a.joint_z, b.joint_z)
    assert a.windows == b.windows
    np.testing.assert_array_equal(a.P.indptr, b.P.indptr)
    np.testing.assert_array_equal(a.P.indices, b.P.indices)
    np.testing.assert_allclose(a.P.data, b.P.data, atol=1e-15)
    np.testing.assert_allclose(a.initial, b.initial, atol=1e-15)


def test_enumeration_equivalent_tiger():
    a, b = build_both(envs.tiger().spec, 3)
    assert a.n_joint == b.n_joint
    np.testing.assert_array_equal(a.joint_z, b.joint_z)


def _args(mdp, mu):
    return (mdp.P.indptr.astype(np.int64), mdp.P.indices.astype(np.int64), mdp.P.data,
            np.ascontiguousarray(mdp.R))


def test_q_iteration_equivalent(rng):
    mdp = build_env_agent_mdp(random_spec(rng), 2)
    mu = oracle.random_policy(mdp, rng)
    pj = np.ascontiguousarray(mdp.joint_policy(mu))
    qa, ia, _ = compiled.q_iteration(*_args(mdp, mu), pj, mdp.gamma, 1e-12, 100_000)
    qb, ib, _ = py.q_iteration(*_args(mdp, mu), pj, mdp.gamma, 1e-12, 100_000)
    assert ia == ib
    np.testing.assert_allclose(qa, qb, atol=1e-12)


def test_sym_q_iteration_equivalent(rng):
    mdp = build_env_agent_mdp(random_spec(rng), 2)
    mu = oracle.random_policy(mdp, rng)
    w = np.ascontiguousarray(oracle.bootstrap_weights(mdp, oracle.discounted_visitation(mdp, mu)))
    ra = compiled.sym_q_iteration(*_args(mdp, mu), mdp.joint_z, w, mu, mdp.n_z, mdp.gamma, 1e-12, 100_000)
    rb = py.sym_q_iteration(*_args(mdp, mu), mdp.joint_z, w, mu, mdp.n_z, mdp.gamma, 1e-12, 100_000)
    np.testing.assert_allclose(ra[0], rb[0], atol=1e-12)
    assert ra[1] == rb[1]
    assert ra[2] == pytest.approx(rb[2], abs=1e-9)


def test_sparse_affine_equivalent(rng):
    idx = rng.integers(0, 20, size=(9, 4)).astype(np.int64)
    val = rng.normal(size=(9, 4))
    W, b = rng.normal(size=(20, 7)), rng.normal(size=7)
    np.testing.assert_allclose(compiled.sparse_affine_forward(idx, val, W, b),
                               py.sparse_affine_forward(idx, val, W, b), atol=1e-13)
    g = rng.normal(size=(9, 7))
    np.testing.assert_allclose(compiled.sparse_affine_backward(idx, val, g, 20),
                               py.sparse_affine_backward(idx, val, g, 20), atol=1e-13)


def test_adam_and_polyak_equivalent(rng):
    p0, g = rng.normal(size=30), rng.normal(size=30)
    m0, v0 = rng.normal(size=30), rng.random(30)
    outs = []
    for impl in (compiled, py):
        p, m, v = p0.copy(), m0.copy(), v0.copy()
        impl.adam_update(p, g, m, v, 0.01, 0.9, 0.999, 0.1, 0.001, 1e-8)
        t = p0.copy()
        impl.polyak(t, g, 0.005)
        outs.append((p, m, v, t))
    for a, b in zip(*outs):
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_oracle_results_backend_independent(rng, python_backend):
    spec = random_spec(rng)
    mdp = build_env_agent_mdp(spec, 2)
    mu = oracle.random_policy(mdp, rng)
    q_py = oracle.symmetric_td_fixed_point(mdp, mu)
    kernels.use("compiled")
    q_c = oracle.symmetric_td_fixed_point(build_env_agent_mdp(spec, 2), mu)
    np.testing.assert_allclose(q_py, q_c, atol=1e-10)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use("fortran")
