"""Exact dynamic programming on the environment/agent-state MDP.

Policies are tables ``mu[z, a]`` over agent-state indices of an
:class:`~aawr.pomdp.EnvAgentMdp`; joint quantities are indexed by joint state
``j`` (one ``(s, z)`` pair each).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from aawr import kernels
from aawr.pomdp import EnvAgentMdp, PomdpSpec, build_env_agent_mdp

DEFAULT_TOL = 1e-10
MAX_ITER = 1_000_000


class PolicyError(ValueError):
    """A policy table is not a valid conditional distribution."""


@dataclass
class ValueTable:
    q_priv: np.ndarray  # (J, A)
    v_priv: np.ndarray  # (J,)
    q_sym: np.ndarray  # (Z, A); NaN rows for agent states never visited
    v_sym: np.ndarray  # (Z,)
    policy: np.ndarray  # (Z, A)

    @property
    def adv_priv(self) -> np.ndarray:
        return self.q_priv - self.v_priv[:, None]

    @property
    def adv_sym(self) -> np.ndarray:
        return self.q_sym - self.v_sym[:, None]


@dataclass
class VisitationTable:
    d: np.ndarray  # (J,) normalized discounted occupancy of (s, z)
    d_z: np.ndarray  # (Z,) marginal over agent states
    conditional: np.ndarray  # (J,) d(s_j | z_j); NaN where the marginal is zero
    joint_z: np.ndarray

    @property
    def n_z(self) -> int:
        return len(self.d_z)

    @property
    def visited_z(self) -> np.ndarray:
        return self.d_z > 0


def check_policy(mdp: EnvAgentMdp, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (mdp.n_z, mdp.n_actions):
        raise PolicyError(f"policy has shape {mu.shape}, expected {(mdp.n_z, mdp.n_actions)}")
    if np.any(mu < 0) or np.max(np.abs(mu.sum(axis=1) - 1.0)) > 1e-9:
        raise PolicyError("policy rows must be nonnegative and sum to 1")
    return np.ascontiguousarray(mu)


def uniform_policy(mdp: EnvAgentMdp) -> np.ndarray:
    return np.full((mdp.n_z, mdp.n_actions), 1.0 / mdp.n_actions)


def random_policy(mdp: EnvAgentMdp, rng: np.random.Generator, concentration: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(mdp.n_actions, concentration), size=mdp.n_z)


def _policy_matrix(mdp: EnvAgentMdp, mu: np.ndarray) -> sp.csr_matrix:
    """``P_mu[j, j'] = sum_a mu(a|z_j) p(j'|j, a)``."""
    J, A = mdp.n_joint, mdp.n_actions
    pi = mdp.joint_policy(mu).ravel()
    D = sp.diags(pi)
    M = sp.csr_matrix((np.ones(J * A), (np.repeat(np.arange(J), A), np.arange(J * A))), shape=(J, J * A))
    return (M @ D @ mdp.P).tocsr()


def evaluate_privileged(mdp: EnvAgentMdp, mu, tol: float = DEFAULT_TOL, method: str = "iterate"):
    """Exact ``Q(s, z, a)`` and ``V(s, z)`` of an agent-state policy.

    ``method="iterate"`` runs the asymmetric Bellman operator to a sup-norm
    step below ``tol``; ``method="solve"`` solves the linear system directly.
    """
    mu = check_policy(mdp, mu)
    J, A = mdp.n_joint, mdp.n_actions
    pi_joint = np.ascontiguousarray(mdp.joint_policy(mu))
    if method == "iterate":
        q, _, _ = kernels.q_iteration(
            mdp.P.indptr.astype(np.int64), mdp.P.indices.astype(np.int64), mdp.P.data,
            np.ascontiguousarray(mdp.R), pi_joint, mdp.gamma, tol, MAX_ITER,
        )
    elif method == "solve":
        P_mu = _policy_matrix(mdp, mu)
        r_mu = (pi_joint * mdp.R).sum(axis=1)
        v = spla.spsolve((sp.identity(J, format="csc") - mdp.gamma * P_mu).tocsc(), r_mu)
        q = mdp.R + mdp.gamma * (mdp.P @ v).reshape(J, A)
    else:
        raise ValueError(f"unknown method {method!r}")
    v = (pi_joint * q).sum(axis=1)
    return q, v


def discounted_visitation(mdp: EnvAgentMdp, mu, tol: float = DEFAULT_TOL, method: str = "solve") -> VisitationTable:
    """``d(s, z) = (1 - gamma) sum_t gamma^t p(s_t = s, z_t = z)`` and ``d(s | z)``."""
    mu = check_policy(mdp, mu)
    J = mdp.n_joint
    P_mu = _policy_matrix(mdp, mu)
    rhs = (1.0 - mdp.gamma) * mdp.initial
    if method == "solve":
        d = spla.spsolve((sp.identity(J, format="csc") - mdp.gamma * P_mu.T).tocsc(), rhs)
    elif method == "iterate":
        d = rhs.copy()
        PT = P_mu.T.tocsr()
        for _ in range(MAX_ITER):
            d_new = rhs + mdp.gamma * (PT @ d)
            if np.max(np.abs(d_new - d)) <= tol:
                d = d_new
                break
            d = d_new
    else:
        raise ValueError(f"unknown method {method!r}")
    d = np.clip(d, 0.0, None)
    d_z = np.bincount(mdp.joint_z, weights=d, minlength=mdp.n_z)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(d_z[mdp.joint_z] > 0, d / d_z[mdp.joint_z], np.nan)
    return VisitationTable(d=d, d_z=d_z, conditional=cond, joint_z=mdp.joint_z)


def symmetric_values(q_priv: np.ndarray, v_priv: np.ndarray, visitation: VisitationTable):
    """Average privileged values over ``d(s | z)``; unvisited agent states get NaN."""
    w = np.nan_to_num(visitation.conditional)
    Z = visitation.n_z
    A = q_priv.shape[1]
    q_sym = np.zeros((Z, A))
    for a in range(A):
        q_sym[:, a] = np.bincount(visitation.joint_z, weights=w * q_priv[:, a], minlength=Z)
    v_sym = np.bincount(visitation.joint_z, weights=w * v_priv, minlength=Z)
    unvisited = ~visitation.visited_z
    q_sym[unvisited] = np.nan
    v_sym[unvisited] = np.nan
    return q_sym, v_sym


def value_table(mdp: EnvAgentMdp, mu, tol: float = DEFAULT_TOL) -> tuple[ValueTable, VisitationTable]:
    q, v = evaluate_privileged(mdp, mu, tol)
    vis = discounted_visitation(mdp, mu)
    q_sym, v_sym = symmetric_values(q, v, vis)
    return ValueTable(q, v, q_sym, v_sym, np.asarray(mu, dtype=np.float64)), vis


def bootstrap_weights(mdp: EnvAgentMdp, visitation: VisitationTable) -> np.ndarray:
    """``d(s | z)`` with a uniform fallback over ``s`` where ``z`` is never visited."""
    counts = np.bincount(mdp.joint_z, minlength=mdp.n_z).astype(np.float64)
    return np.where(np.isnan(visitation.conditional), 1.0 / counts[mdp.joint_z], visitation.conditional)


@dataclass
class FixedPointInfo:
    iterations: int
    max_ratio: float
    contraction_ok: bool


def symmetric_td_fixed_point(mdp: EnvAgentMdp, mu, tol: float = DEFAULT_TOL,
                             visitation: VisitationTable | None = None, return_info: bool = False):
    """Fixed point of the unprivileged Bellman operator.

    ``Q(z, a) = sum_s d(s|z) [R(s, a) + gamma sum_{z'} p(z'|s, z, a) sum_{a'} mu(a'|z') Q(z', a')]``,
    which bootstraps from ``d(s'|z')`` instead of the true next-state law.
    """
    mu = check_policy(mdp, mu)
    if visitation is None:
        visitation = discounted_visitation(mdp, mu)
    weight = bootstrap_weights(mdp, visitation)
    q, iters, ratio = kernels.sym_q_iteration(
        mdp.P.indptr.astype(np.int64), mdp.P.indices.astype(np.int64), mdp.P.data,
        np.ascontiguousarray(mdp.R), mdp.joint_z, np.ascontiguousarray(weight), mu,
        mdp.n_z, mdp.gamma, tol, MAX_ITER,
    )
    if return_info:
        return q, FixedPointInfo(iters, ratio, ratio < mdp.gamma + 1e-6)
    return q


def awr_closed_form_update(mu, advantage: np.ndarray, beta: float, visitation: VisitationTable | None = None,
                           kind: str = "auto") -> np.ndarray:
    """Exact maximizer of the advantage-weighted log-likelihood over tabular policies.

    Privileged advantages ``(J, A)``: ``pi(a|z) ∝ mu(a|z) sum_s d(s|z) exp(A(s,z,a)/beta)``.
    Agent-state advantages ``(Z, A)``: ``pi(a|z) ∝ mu(a|z) exp(A(z,a)/beta)``.
    Agent states never visited keep ``mu``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    mu = np.asarray(mu, dtype=np.float64)
    Z, A = mu.shape
    if kind == "auto":
        kind = "aawr" if visitation is not None and advantage.shape[0] != Z else "sawr"
    if kind == "sawr":
        x = advantage / beta
        x = x - np.nanmax(np.where(mu > 0, x, -np.inf), axis=1, keepdims=True)
        w = mu * np.exp(np.where(mu > 0, x, 0.0))
        w = np.nan_to_num(w)
    elif kind == "aawr":
        if visitation is None:
            raise ValueError("privileged update needs the visitation table")
        jz = visitation.joint_z
        x = advantage / beta
        # log-sum-exp shift per agent state
        shift = np.full(Z, -np.inf)
        np.maximum.at(shift, jz, x.max(axis=1))
        ex = np.exp(x - shift[jz][:, None]) * np.nan_to_num(visitation.conditional)[:, None]
        agg = np.zeros((Z, A))
        for a in range(A):
            agg[:, a] = np.bincount(jz, weights=ex[:, a], minlength=Z)
        w = mu * agg
    else:
        raise ValueError(f"unknown kind {kind!r}")
    total = w.sum(axis=1, keepdims=True)
    out = np.where(total > 0, w / np.where(total > 0, total, 1.0), mu)
    return out


def awr_objective(pi: np.ndarray, mu: np.ndarray, advantage: np.ndarray, beta: float,
                  visitation: VisitationTable) -> float:
    """``E_{(s,z)~d} E_{a~mu} [exp(A/beta) log pi(a|z)]`` for privileged or agent-state advantages."""
    jz = visitation.joint_z
    if advantage.shape[0] == len(jz):
        w = visitation.d[:, None] * mu[jz] * np.exp(advantage / beta)
        logp = np.log(np.where(mu[jz] > 0, pi[jz], 1.0))
    else:
        w = visitation.d[:, None] * mu[jz] * np.exp(advantage[jz] / beta)
        logp = np.log(np.where(mu[jz] > 0, pi[jz], 1.0))
    return float((w * logp).sum())


def maximize_awr_objective(mu, advantage: np.ndarray, beta: float, visitation: VisitationTable,
                           gtol: float = 1e-12) -> np.ndarray:
    """Maximize :func:`awr_objective` numerically over softmax-parameterized tabular policies.

    An independent route to the closed-form update: quasi-Newton ascent on
    the logits, with the objective and its gradient assembled from the
    joint-state tables. Agent states without visitation keep ``mu``.
    """
    from scipy.optimize import minimize

    mu = np.asarray(mu, dtype=np.float64)
    Z, A = mu.shape
    jz = visitation.joint_z
    adv = advantage if advantage.shape[0] == len(jz) else advantage[jz]
    # per-(j, a) weights d(j) mu(a|z_j) exp(A/beta), normalized for conditioning
    x = adv / beta
    c_joint = visitation.d[:, None] * mu[jz] * np.exp(x - x.max())
    c = np.zeros((Z, A))
    for a in range(A):
        c[:, a] = np.bincount(jz, weights=c_joint[:, a], minlength=Z)
    mass = c.sum(axis=1)
    visited = mass > 0
    if not visited.any():
        return mu.copy()
    # the objective is a sum of independent per-z terms, so rescaling each row leaves the maximizer
    # unchanged; without it, rarely visited z have gradients far below gtol and stop early
    c[visited] /= mass[visited, None]

    def negative(theta):
        th = theta.reshape(Z, A)
        th = th - th.max(axis=1, keepdims=True)
        logp = th - np.log(np.exp(th).sum(axis=1, keepdims=True))
        value = float((c * logp).sum())
        grad = c - c.sum(axis=1, keepdims=True) * np.exp(logp)
        return -value, -grad.ravel()

    theta0 = np.log(np.maximum(mu, 1e-300)).ravel()
    res = minimize(negative, theta0, jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 1e-15, "maxiter": 10_000})
    th = res.x.reshape(Z, A)
    pi = np.exp(th - th.max(axis=1, keepdims=True))
    pi /= pi.sum(axis=1, keepdims=True)
    return np.where(visited[:, None], pi, mu)


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise total variation distance."""
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def expected_return(mdp: EnvAgentMdp, pi, tol: float = DEFAULT_TOL) -> float:
    _, v = evaluate_privileged(mdp, pi, tol)
    return float(mdp.initial @ v)


def success_probability(mdp: EnvAgentMdp, pi, horizon: int) -> float:
    """Probability of ending the episode on a positive reward within ``horizon`` steps."""
    pi = check_policy(mdp, pi)
    pj = mdp.joint_policy(pi)
    to_terminal = (mdp.P @ mdp.is_terminal.astype(np.float64)).reshape(mdp.n_joint, mdp.n_actions)
    win = (pj * to_terminal * (mdp.R > 0)).sum(axis=1)
    P_mu = _policy_matrix(mdp, pi).T.tocsr()
    p = mdp.initial * ~mdp.is_terminal
    total = 0.0
    for _ in range(horizon):
        total += float(p @ win)
        p = P_mu @ p
        p[mdp.is_terminal] = 0.0
    return total


def improvement_identity(mdp: EnvAgentMdp, pi, mu, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """Both sides of ``J(pi) - J(mu) = E_{d_pi} E_pi [A_mu(s, z, a)] / (1 - gamma)``."""
    q, v = evaluate_privileged(mdp, mu, tol)
    adv = q - v[:, None]
    vis = discounted_visitation(mdp, pi)
    lhs = float((vis.d[:, None] * mdp.joint_policy(pi) * adv).sum()) / (1.0 - mdp.gamma)
    rhs = expected_return(mdp, pi, tol) - expected_return(mdp, mu, tol)
    return lhs, rhs


def improvement_frequency(n_instances: int = 20, seed: int = 0, beta: float = 1.0, k: int = 2) -> dict:
    """How often one exact privileged AWR update raises the return on random POMDPs.

    The update maximizes an off-policy surrogate, so improvement is measured
    and reported rather than assumed.
    """
    rng = np.random.default_rng(seed)
    deltas = []
    for _ in range(n_instances):
        spec = random_pomdp(rng)
        mdp = build_env_agent_mdp(spec, k)
        mu = random_policy(mdp, rng)
        table, vis = value_table(mdp, mu)
        pi = awr_closed_form_update(mu, table.adv_priv, beta, vis, kind="aawr")
        deltas.append(expected_return(mdp, pi) - expected_return(mdp, mu))
    deltas = np.asarray(deltas)
    return {"n_instances": n_instances, "beta": beta, "improved": int(np.sum(deltas >= -1e-10)),
            "delta_j": deltas.tolist(), "min_delta_j": float(deltas.min()) if n_instances else 0.0}


def random_pomdp(rng: np.random.Generator, n_states: int = 3, n_actions: int = 2, n_obs: int = 2,
                 gamma: float = 0.9) -> PomdpSpec:
    """Dense random POMDP plus one absorbing terminal state."""
    S = n_states + 1
    T = rng.dirichlet(np.ones(S), size=(S, n_actions))
    T[-1] = 0.0
    T[-1, :, -1] = 1.0
    R = rng.uniform(-1, 1, size=(S, n_actions))
    R[-1] = 0.0
    E = rng.dirichlet(np.ones(n_obs), size=S)
    init = np.append(rng.dirichlet(np.ones(n_states)), 0.0)
    return PomdpSpec([f"s{i}" for i in range(S)], [f"a{i}" for i in range(n_actions)],
                     [f"o{i}" for i in range(n_obs)], T, R, E, init, gamma=gamma, horizon=200,
                     terminal=np.arange(S) == S - 1)


def optimal_privileged_value(mdp: EnvAgentMdp, tol: float = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """Value iteration over policies that may read ``s``; an upper bound for agent-state policies."""
    J, A = mdp.n_joint, mdp.n_actions
    v = np.zeros(J)
    for _ in range(MAX_ITER):
        q = mdp.R + mdp.gamma * (mdp.P @ v).reshape(J, A)
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= tol:
            v = v_new
            break
        v = v_new
    return float(mdp.initial @ v), v


def _policy_iteration(mdp: EnvAgentMdp, mu: np.ndarray, max_rounds: int, tol: float):
    value = expected_return(mdp, mu, tol)
    rows = np.arange(mdp.n_z)
    for _ in range(max_rounds):
        q, _ = evaluate_privileged(mdp, mu, tol)
        weight = bootstrap_weights(mdp, discounted_visitation(mdp, mu))
        q_z = np.zeros((mdp.n_z, mdp.n_actions))
        for a in range(mdp.n_actions):
            q_z[:, a] = np.bincount(mdp.joint_z, weights=weight * q[:, a], minlength=mdp.n_z)
        # keep the incumbent action on ties so the search cannot cycle
        current = mu.argmax(axis=1)
        best_a = q_z.argmax(axis=1)
        best_a = np.where(q_z[rows, current] >= q_z[rows, best_a] - 1e-12, current, best_a)
        greedy = np.zeros_like(mu)
        greedy[rows, best_a] = 1.0
        new_value = expected_return(mdp, greedy, tol)
        if new_value <= value + 1e-12:
            break
        mu, value = greedy, new_value
    return value, mu


def _coordinate_ascent(mdp: EnvAgentMdp, mu: np.ndarray, value: float, max_sweeps: int):
    """Switch one agent state's action at a time while the exact return improves."""
    mu = mu.copy()
    for _ in range(max_sweeps):
        improved = False
        for z in range(mdp.n_z):
            current = int(mu[z].argmax())
            for a in range(mdp.n_actions):
                if a == current:
                    continue
                mu[z] = 0.0
                mu[z, a] = 1.0
                v = _return_by_solve(mdp, mu)
                if v > value + 1e-12:
                    value, current, improved = v, a, True
                mu[z] = 0.0
                mu[z, current] = 1.0
        if not improved:
            break
    return value, mu


def _return_by_solve(mdp: EnvAgentMdp, mu: np.ndarray) -> float:
    P_mu = _policy_matrix(mdp, mu)
    r_mu = (mdp.joint_policy(mu) * mdp.R).sum(axis=1)
    v = spla.spsolve((sp.identity(mdp.n_joint, format="csc") - mdp.gamma * P_mu).tocsc(), r_mu)
    return float(mdp.initial @ v)


def optimize_agent_state_policy(mdp: EnvAgentMdp, n_restarts: int = 4, seed: int = 0, max_rounds: int = 200,
                                max_sweeps: int = 20, tol: float = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """Best deterministic agent-state policy found by local search.

    Each restart runs policy iteration (greedy on ``Q(z, a)`` under the
    current visitation) and then single-state coordinate ascent on the exact
    return. Agent-state policies are not covered by the Bellman optimality
    principle, so the result is a lower bound on the optimum over window
    policies; it is exact whenever it meets an upper bound such as the
    history-based optimum.
    """
    rng = np.random.default_rng(seed)
    best_value, best_pi = -np.inf, None
    starts = [uniform_policy(mdp)] + [random_policy(mdp, rng) for _ in range(max(n_restarts - 1, 0))]
    for mu in starts:
        value, mu = _policy_iteration(mdp, mu, max_rounds, tol)
        if not np.all(np.isin(mu, (0.0, 1.0))):
            det = np.zeros_like(mu)
            det[np.arange(mdp.n_z), mu.argmax(axis=1)] = 1.0
            mu, value = det, _return_by_solve(mdp, det)
        if max_sweeps:
            value, mu = _coordinate_ascent(mdp, mu, value, max_sweeps)
        if value > best_value:
            best_value, best_pi = value, mu
    return best_value, best_pi


def optimal_history_value(spec: PomdpSpec, depth: int) -> float:
    """Optimal expected discounted return over all history-dependent policies for ``depth`` steps.

    Exhaustive expectimax over action/observation trees. Subtrees are shared
    between histories that reach the same unnormalized state distribution,
    which keeps small instances tractable without changing the result.
    """
    T, R, E = spec.transition, spec.reward, spec.emission
    live = ~spec.terminal
    cache: dict = {}

    def value(alpha: np.ndarray, steps: int) -> float:
        # alpha: unnormalized probability over states consistent with the history so far
        if steps == 0 or alpha[live].sum() <= 1e-15:
            return 0.0
        key = (steps, tuple(np.round(alpha, 12)))
        hit = cache.get(key)
        if hit is not None:
            return hit
        best = -np.inf
        masked = np.where(live, alpha, 0.0)
        for a in range(spec.n_actions):
            total = float(masked @ R[:, a])
            nxt = (masked @ T[:, a, :]) * live
            for o in range(spec.n_observations):
                child = nxt * E[:, o]
                if child.sum() > 1e-15:
                    total += spec.gamma * value(child, steps - 1)
            best = max(best, total)
        cache[key] = best
        return best

    total = 0.0
    for o in range(spec.n_observations):
        alpha = spec.initial * E[:, o]
        if alpha.sum() > 0:
            total += value(alpha, depth)
    return total


# --------------------------------------------------------------------------
def fully_observed_pomdp(rng: np.random.Generator, n_states: int = 4, n_actions: int = 2,
                         gamma: float = 0.9) -> PomdpSpec:
    """Random POMDP whose observation is the state itself."""
    S = n_states
    T = rng.dirichlet(np.ones(S), size=(S, n_actions))
    R = rng.uniform(-1, 1, size=(S, n_actions))
    init = rng.dirichlet(np.ones(S))
    return PomdpSpec([f"s{i}" for i in range(S)], [f"a{i}" for i in range(n_actions)],
                     [f"o{i}" for i in range(S)], T, R, np.eye(S), init, gamma=gamma, horizon=200)


# Witness instances


def _load_spec(name: str) -> PomdpSpec:
    text = resources.files("aawr").joinpath("data", name).read_text()
    return PomdpSpec.loads(text)


def aliased_witness_spec() -> PomdpSpec:
    """Shipped POMDP where two states share an observation but lead to different rewards."""
    return _load_spec("aliased_witness.json")


def symmetric_bias_witness(spec: PomdpSpec | None = None, k: int = 1, mu=None, tol: float = 1e-12) -> dict:
    """Compare the unprivileged TD fixed point with the exact symmetric Q-function."""
    spec = spec if spec is not None else aliased_witness_spec()
    mdp = build_env_agent_mdp(spec, k)
    mu = uniform_policy(mdp) if mu is None else mu
    table, vis = value_table(mdp, mu, tol)
    q_tilde, info = symmetric_td_fixed_point(mdp, mu, tol, visitation=vis, return_info=True)
    visited = vis.visited_z
    gap = float(np.max(np.abs(q_tilde[visited] - table.q_sym[visited])))
    return {
        "n_joint": mdp.n_joint,
        "n_z": mdp.n_z,
        "q_sym": table.q_sym[visited].tolist(),
        "q_tilde": q_tilde[visited].tolist(),
        "gap": gap,
        "iterations": info.iterations,
        "max_contraction_ratio": info.max_ratio,
        "contraction_ok": info.contraction_ok,
    }


def _one_step_spec(rewards_a0: list[float], probs: list[float], gamma: float = 0.9) -> PomdpSpec:
    """Aliased one-shot decision: every state emits the same observation, then terminates."""
    n = len(probs)
    S = n + 1
    T = np.zeros((S, 2, S))
    T[:, :, n] = 1.0
    R = np.zeros((S, 2))
    R[:n, 0] = rewards_a0
    E = np.ones((S, 1))
    init = np.array(list(probs) + [0.0])
    return PomdpSpec([f"s{i}" for i in range(n)] + ["done"], ["risky", "safe"], ["x"], T, R, E, init,
                     gamma=gamma, horizon=1, terminal=[False] * n + [True])


def _aliased_updates(spec: PomdpSpec, beta: float):
    mdp = build_env_agent_mdp(spec, 1)
    mu = uniform_policy(mdp)
    table, vis = value_table(mdp, mu)
    z = mdp.joint_z[np.flatnonzero(mdp.initial > 0)[0]]
    members = np.flatnonzero((mdp.joint_z == z) & (vis.d > 0))
    cond = vis.conditional[members]
    adv_priv = table.adv_priv
    pi_aawr = awr_closed_form_update(mu, adv_priv, beta, vis, kind="aawr")
    pi_sawr = awr_closed_form_update(mu, table.adv_sym, beta, kind="sawr")
    weights_aawr = [float(cond @ np.exp(adv_priv[members, a] / beta)) for a in range(mdp.n_actions)]
    weights_sawr = [float(np.exp(table.adv_sym[z, a] / beta)) for a in range(mdp.n_actions)]
    return {
        "advantages": adv_priv[members].tolist(),
        "conditional": cond.tolist(),
        "aawr_weight_mean": weights_aawr,
        "sawr_weight": weights_sawr,
        "pi_aawr": pi_aawr[z].tolist(),
        "pi_sawr": pi_sawr[z].tolist(),
        "argmax_aawr": int(np.argmax(pi_aawr[z])),
        "argmax_sawr": int(np.argmax(pi_sawr[z])),
    }


def jensen_gap_witness(beta: float = 1.0, a: float = 1.0) -> dict:
    """Exponential-weight gap between privileged and agent-state advantages.

    Part one aliases two equiprobable states whose ``risky`` advantages are
    ``+a`` and ``-a``: the mean privileged weight is ``cosh(a/beta)`` while
    the agent-state weight is ``exp(0) = 1``. Part two is the shipped
    lottery instance where the two closed-form updates pick different actions.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    # uniform mu over two actions halves the reward gap: A(s, risky) = R(s, risky) / 2
    symmetric = _aliased_updates(_one_step_spec([2 * a, -2 * a], [0.5, 0.5]), beta)
    params = json.loads(resources.files("aawr").joinpath("data", "jensen_witness.json").read_text())
    lottery = _aliased_updates(_one_step_spec(params["rewards_risky"], params["probs"]), params["beta"])
    return {
        "beta": beta,
        "a": a,
        "aawr_weight_mean": symmetric["aawr_weight_mean"][0],
        "sawr_weight": symmetric["sawr_weight"][0],
        "cosh": float(np.cosh(a / beta)),
        "gap": symmetric["aawr_weight_mean"][0] - symmetric["sawr_weight"][0],
        "symmetric_instance": symmetric,
        "argmax_instance": {"params": params, **lottery},
        "argmax_differs": lottery["argmax_aawr"] != lottery["argmax_sawr"],
    }
