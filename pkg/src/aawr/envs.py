"""Toy active-perception POMDPs and their scripted demonstrators.

Each catalog entry bundles a :class:`PomdpSpec`, a map from environment
states to privileged observation vectors (what the critics may see during
training), a default window length and a noisy scripted demonstrator.

The demonstrators follow the usual recipe for "suboptimal scripted demos":
an expert script that reads the true hidden state, corrupted by
epsilon-random actions. Epsilon is tuned per task so the demos succeed in
roughly 20-50% of episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from aawr.buffer import Transition
from aawr.pomdp import AgentState, PomdpSpec, agent_state_update, reset, step


class ConfigError(ValueError):
    """Invalid environment parameters."""


DemoPolicy = Callable[[int, AgentState], np.ndarray]


@dataclass
class EnvCatalogEntry:
    name: str
    spec: PomdpSpec
    privileged_table: np.ndarray  # (S, d) privileged vector per environment state
    default_k: int
    demo_policy: DemoPolicy
    demo_epsilon: float
    params: dict = field(default_factory=dict)
    privileged_noise: float = 0.0

    @property
    def privileged_dim(self) -> int:
        return self.privileged_table.shape[1]

    def privileged_map(self, s: int, rng: np.random.Generator | None = None) -> np.ndarray:
        v = self.privileged_table[s]
        if self.privileged_noise > 0 and rng is not None and v.any() and rng.random() < self.privileged_noise:
            # corrupted reading: a uniformly chosen one-hot
            v = np.zeros_like(v)
            v[rng.integers(len(v))] = 1.0
        return v


def _onehot_rows(n_rows: int, dim: int, hot: dict[int, int]) -> np.ndarray:
    table = np.zeros((n_rows, dim))
    for row, col in hot.items():
        table[row, col] = 1.0
    return table


def _epsilon_mix(n_actions: int, greedy: int, eps: float) -> np.ndarray:
    p = np.full(n_actions, eps / n_actions)
    p[greedy] += 1.0 - eps
    return p


# --------------------------------------------------------------------------
# Tiger


def tiger(listen_accuracy: float = 0.85, penalty: float = -100.0, prize: float = 10.0,
          gamma: float = 0.95, listen_reward: float = 0.0, horizon: int | None = None,
          demo_epsilon: float = 0.65) -> EnvCatalogEntry:
    """Classic tiger problem with an uninformative first observation.

    The tiger's side is fixed at reset. Every non-initial step emits a hint
    that is correct with probability ``listen_accuracy``; opening a door ends
    the episode with ``prize`` or ``penalty``.
    """
    if not 0.5 < listen_accuracy <= 1.0:
        raise ConfigError("listen_accuracy must lie in (0.5, 1]")
    states = ["left/start", "right/start", "left", "right", "done"]
    actions = ["listen", "open-left", "open-right"]
    observations = ["none", "hear-left", "hear-right"]
    S, A, O = 5, 3, 3
    LS, RS, L, R, D = range(5)
    T = np.zeros((S, A, S))
    Rw = np.zeros((S, A))
    for s, side in ((LS, L), (RS, R), (L, L), (R, R)):
        T[s, 0, side] = 1.0
        T[s, 1, D] = T[s, 2, D] = 1.0
        Rw[s, 0] = listen_reward
        tiger_left = side == L
        Rw[s, 1] = penalty if tiger_left else prize
        Rw[s, 2] = prize if tiger_left else penalty
    T[D, :, D] = 1.0
    E = np.zeros((S, O))
    E[LS, 0] = E[RS, 0] = E[D, 0] = 1.0
    E[L, 1], E[L, 2] = listen_accuracy, 1 - listen_accuracy
    E[R, 2], E[R, 1] = listen_accuracy, 1 - listen_accuracy
    if horizon is None:
        horizon = int(np.ceil(np.log(1e-4) / np.log(gamma))) + 1
    spec = PomdpSpec(states, actions, observations, T, Rw, E,
                     initial=[0.5, 0.5, 0, 0, 0], gamma=gamma, horizon=horizon,
                     terminal=[False, False, False, False, True])
    priv = _onehot_rows(S, 2, {LS: 0, L: 0, RS: 1, R: 1})

    def demo(s: int, z: AgentState) -> np.ndarray:
        # listen once, then open the safe door; with probability epsilon the
        # script swaps the doors (uniform noise alone cannot push a tiger
        # demonstrator below 50% success)
        if s in (LS, RS):
            return np.array([1.0, 0.0, 0.0])
        p = np.zeros(A)
        safe = 2 if s == L else 1
        p[safe] = 1.0 - demo_epsilon
        p[3 - safe] = demo_epsilon
        return p

    return EnvCatalogEntry("tiger", spec, priv, default_k=4, demo_policy=demo, demo_epsilon=demo_epsilon,
                           params=dict(listen_accuracy=listen_accuracy, penalty=penalty, prize=prize,
                                       gamma=gamma, listen_reward=listen_reward, horizon=horizon))


# --------------------------------------------------------------------------
# Hidden target grid

GRID_ACTIONS = ["up", "down", "left", "right", "grab"]
_MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}


def _patch_origin(pos: int, extent: int, fov: int) -> int:
    # camera window clamped to the grid so fov >= extent sees everything
    lo = pos - (fov - 1) // 2
    return int(min(max(lo, 0), max(extent - fov, 0)))


def hidden_target_grid(width: int = 5, height: int = 5, fov: int = 1, gamma: float = 0.95,
                       horizon: int = 40, demo_epsilon: float = 0.93, start: int = 0) -> EnvCatalogEntry:
    """Find a hidden target with a limited field of view, then grab it.

    State: (agent cell, target cell) plus an absorbing ``done`` state.
    Observation: the agent's own cell and the target's position inside the
    ``fov x fov`` camera patch (or "not visible"). Reward +1 for grabbing at
    the target cell, which ends the episode; a wrong grab does nothing.
    """
    if width < 1 or height < 1 or width * height > 64:
        raise ConfigError("grid must have 1 <= width*height <= 64")
    if fov < 1:
        raise ConfigError("fov must be >= 1")
    if not 0 <= start < width * height:
        raise ConfigError("start cell out of range")
    n = width * height
    pw, ph = min(fov, width), min(fov, height)
    n_patch = pw * ph
    S = n * n + 1
    D = S - 1
    A = len(GRID_ACTIONS)
    O = n * (n_patch + 1)

    def sid(agent, target):
        return agent * n + target

    def observe(agent, target):
        ar, ac = divmod(agent, width)
        tr, tc = divmod(target, width)
        r0, c0 = _patch_origin(ar, height, fov), _patch_origin(ac, width, fov)
        if r0 <= tr < r0 + ph and c0 <= tc < c0 + pw:
            return agent * (n_patch + 1) + 1 + (tr - r0) * pw + (tc - c0)
        return agent * (n_patch + 1)

    def move(agent, a):
        r, c = divmod(agent, width)
        dr, dc = _MOVES[a]
        r2, c2 = r + dr, c + dc
        if 0 <= r2 < height and 0 <= c2 < width:
            return r2 * width + c2
        return agent

    T = np.zeros((S, A, S))
    Rw = np.zeros((S, A))
    E = np.zeros((S, O))
    for agent in range(n):
        for target in range(n):
            s = sid(agent, target)
            for a in range(4):
                T[s, a, sid(move(agent, a), target)] = 1.0
            if agent == target:
                T[s, 4, D] = 1.0
                Rw[s, 4] = 1.0
            else:
                T[s, 4, s] = 1.0
            E[s, observe(agent, target)] = 1.0
    T[D, :, D] = 1.0
    E[D, 0] = 1.0
    init = np.zeros(S)
    init[[sid(start, t) for t in range(n)]] = 1.0 / n

    observations = []
    for agent in range(n):
        observations.append(f"at{agent}:none")
        observations.extend(f"at{agent}:see{i}" for i in range(n_patch))
    states = [f"a{ag}/t{tg}" for ag in range(n) for tg in range(n)] + ["done"]
    spec = PomdpSpec(states, list(GRID_ACTIONS), observations, T, Rw, E, init,
                     gamma=gamma, horizon=horizon, terminal=np.arange(S) == D)
    priv = _onehot_rows(S, n, {sid(ag, tg): tg for ag in range(n) for tg in range(n)})

    def demo(s: int, z: AgentState) -> np.ndarray:
        # head for the true target (rows first), grab on arrival
        agent, target = divmod(s, n)
        if agent == target:
            return _epsilon_mix(A, 4, demo_epsilon)
        ar, ac = divmod(agent, width)
        tr, tc = divmod(target, width)
        if ar != tr:
            greedy = 1 if tr > ar else 0
        else:
            greedy = 3 if tc > ac else 2
        return _epsilon_mix(A, greedy, demo_epsilon)

    return EnvCatalogEntry("hidden_target_grid", spec, priv, default_k=6, demo_policy=demo,
                           demo_epsilon=demo_epsilon,
                           params=dict(width=width, height=height, fov=fov, gamma=gamma, horizon=horizon,
                                       demo_epsilon=demo_epsilon, start=start))


# --------------------------------------------------------------------------
# Camouflaged pick on a line

LINE_ACTIONS = ["left", "right", "grab"]


def camouflage_line(n_cells: int = 8, obs_noise: float = 0.4, gamma: float = 0.9, horizon: int | None = None,
                    demo_epsilon: float = 0.6) -> EnvCatalogEntry:
    """Pick a barely visible object on a 1-D strip.

    Each step the target's cell is read correctly with probability
    ``1 - obs_noise`` and as a uniformly chosen wrong cell otherwise. Grabbing
    ends the episode: +1 at the target, 0 elsewhere.
    """
    if not 1 <= n_cells <= 16:
        raise ConfigError("n_cells must lie in [1, 16]")
    if not 0.0 <= obs_noise < 0.5:
        raise ConfigError("obs_noise must lie in [0, 0.5)")
    n = n_cells
    S = n * n + 1
    D = S - 1
    A = 3
    O = n * n
    T = np.zeros((S, A, S))
    Rw = np.zeros((S, A))
    E = np.zeros((S, O))
    for agent in range(n):
        for target in range(n):
            s = agent * n + target
            T[s, 0, max(agent - 1, 0) * n + target] = 1.0
            T[s, 1, min(agent + 1, n - 1) * n + target] = 1.0
            T[s, 2, D] = 1.0
            Rw[s, 2] = 1.0 if agent == target else 0.0
            if n == 1:
                E[s, agent * n + target] = 1.0
                continue
            for seen in range(n):
                E[s, agent * n + seen] = (1 - obs_noise) if seen == target else obs_noise / (n - 1)
    T[D, :, D] = 1.0
    E[D, 0] = 1.0
    init = np.zeros(S)
    init[[t for t in range(n)]] = 1.0 / n  # agent starts in cell 0
    if horizon is None:
        horizon = int(np.ceil(np.log(1e-4) / np.log(gamma))) + 1
    states = [f"a{ag}/t{tg}" for ag in range(n) for tg in range(n)] + ["done"]
    observations = [f"at{ag}:seen{sn}" for ag in range(n) for sn in range(n)]
    spec = PomdpSpec(states, list(LINE_ACTIONS), observations, T, Rw, E, init,
                     gamma=gamma, horizon=horizon, terminal=np.arange(S) == D)
    priv = _onehot_rows(S, n, {ag * n + tg: tg for ag in range(n) for tg in range(n)})

    def demo(s: int, z: AgentState) -> np.ndarray:
        agent, target = divmod(s, n)
        greedy = 2 if agent == target else (1 if target > agent else 0)
        return _epsilon_mix(A, greedy, demo_epsilon)

    return EnvCatalogEntry("camouflage_line", spec, priv, default_k=4, demo_policy=demo,
                           demo_epsilon=demo_epsilon,
                           params=dict(n_cells=n_cells, obs_noise=obs_noise, gamma=gamma, horizon=horizon,
                                       demo_epsilon=demo_epsilon))


CATALOG = {
    "tiger": tiger,
    "hidden_target_grid": hidden_target_grid,
    "camouflage_line": camouflage_line,
}


def make_env(name: str, **params) -> EnvCatalogEntry:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; known: {sorted(CATALOG)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


# --------------------------------------------------------------------------
# Rollouts


def rollout_episode(entry: EnvCatalogEntry, choose_action, rng: np.random.Generator, episode_id: int = 0,
                    k: int | None = None, store_state: bool = True) -> list[Transition]:
    """Run one episode; ``choose_action(s, z, rng)`` returns an action index."""
    spec = entry.spec
    k = k or entry.default_k
    s, o, z = reset(spec, rng, k)
    o_p = tuple(entry.privileged_map(s, rng))
    episode = []
    for t in range(spec.horizon):
        a = int(choose_action(s, z, rng))
        s2, r, o2, done = step(spec, s, a, rng, t=t)
        o_p2 = tuple(entry.privileged_map(s2, rng))
        episode.append(Transition(
            episode_id=episode_id, t=t, o=o, o_p=o_p, a=a, r=r, o_next=o2, o_p_next=o_p2, done=done,
            s=s if store_state else None, s_next=s2 if store_state else None,
        ))
        if done:
            break
        z = agent_state_update(z, a, o2)
        s, o, o_p = s2, o2, o_p2
    return episode


def scripted_demo_rollouts(entry: EnvCatalogEntry, n_episodes: int, seed: int = 0,
                           store_state: bool = True) -> list[list[Transition]]:
    """Demonstrations from the noisy scripted policy, one derived seed per episode."""
    if n_episodes <= 0:
        return []
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    n_actions = entry.spec.n_actions

    def choose(s, z, rng):
        return rng.choice(n_actions, p=entry.demo_policy(s, z))

    return [
        rollout_episode(entry, choose, np.random.default_rng(child), episode_id=i, store_state=store_state)
        for i, child in enumerate(children)
    ]
