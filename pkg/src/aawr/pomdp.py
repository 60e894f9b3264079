"""Finite POMDPs, sliding-window agent states and the environment/agent-state MDP.

A POMDP is stored as dense tables: ``transition[s, a, s']``, ``reward[s, a]``
(expected reward), ``emission[s, o]`` and ``initial[s]``. States flagged in
``terminal`` are absorbing with zero reward; entering one ends the episode.

The agent state is a window of the last ``k`` (observation, previous action)
pairs, left-padded with ``PAD``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from aawr import kernels

PAD = -1
# Window of the collapsed absorbing node that every terminal state maps to.
TERMINAL_PAIR = (-2, -2)

DEFAULT_JOINT_CAP = 10**6
_ROW_TOL = 1e-9


class SpecError(ValueError):
    """Invalid POMDP tables or parameters."""


class CapacityError(RuntimeError):
    """The reachable environment/agent-state space exceeds the configured cap."""


class EpisodeDone(RuntimeError):
    """``step`` was called after the episode ended."""


@dataclass
class PomdpSpec:
    states: list[str]
    actions: list[str]
    observations: list[str]
    transition: np.ndarray
    reward: np.ndarray
    emission: np.ndarray
    initial: np.ndarray
    gamma: float
    horizon: int
    terminal: np.ndarray | None = None
    reward_noise: float = 0.0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.emission = np.asarray(self.emission, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.terminal is None:
            self.terminal = np.zeros(len(self.states), dtype=bool)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        self.gamma = float(self.gamma)
        self.horizon = int(self.horizon)
        self.validate()

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def validate(self) -> None:
        S, A, O = self.n_states, self.n_actions, self.n_observations
        if min(S, A, O) < 1:
            raise SpecError("states, actions and observations must be nonempty")
        shapes = {
            "transition": (self.transition, (S, A, S)),
            "reward": (self.reward, (S, A)),
            "emission": (self.emission, (S, O)),
            "initial": (self.initial, (S,)),
            "terminal": (self.terminal, (S,)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise SpecError(f"{name} has shape {arr.shape}, expected {shape}")
        for name in ("transition", "emission", "initial"):
            arr = getattr(self, name)
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise SpecError(f"{name} must hold finite nonnegative probabilities")
            if np.max(np.abs(arr.sum(axis=-1) - 1.0)) > _ROW_TOL:
                raise SpecError(f"rows of {name} must sum to 1")
        if not np.all(np.isfinite(self.reward)):
            raise SpecError("reward must be finite")
        if not 0.0 < self.gamma < 1.0:
            raise SpecError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise SpecError(f"horizon must be >= 1, got {self.horizon}")
        if self.reward_noise < 0:
            raise SpecError("reward_noise must be nonnegative")
        for s in np.flatnonzero(self.terminal):
            if not np.allclose(self.transition[s, :, s], 1.0) or np.any(self.reward[s] != 0):
                raise SpecError(f"terminal state {self.states[s]!r} must be absorbing with zero reward")

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "observations": list(self.observations),
            "gamma": self.gamma,
            "horizon": self.horizon,
            "reward_noise": self.reward_noise,
            "terminal": [bool(t) for t in self.terminal],
            # dense row-major arrays; shapes follow from the named sets
            "transition": self.transition.ravel().tolist(),
            "reward": self.reward.ravel().tolist(),
            "emission": self.emission.ravel().tolist(),
            "initial": self.initial.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PomdpSpec":
        S, A, O = len(d["states"]), len(d["actions"]), len(d["observations"])
        try:
            return cls(
                states=list(d["states"]),
                actions=list(d["actions"]),
                observations=list(d["observations"]),
                transition=np.asarray(d["transition"], dtype=np.float64).reshape(S, A, S),
                reward=np.asarray(d["reward"], dtype=np.float64).reshape(S, A),
                emission=np.asarray(d["emission"], dtype=np.float64).reshape(S, O),
                initial=np.asarray(d["initial"], dtype=np.float64),
                gamma=d["gamma"],
                horizon=d["horizon"],
                terminal=d.get("terminal"),
                reward_noise=d.get("reward_noise", 0.0),
            )
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(str(exc)) from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "PomdpSpec":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "PomdpSpec":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class AgentState:
    """Last ``k`` (observation, previous action) pairs, oldest first."""

    window: tuple[tuple[int, int], ...]

    @property
    def k(self) -> int:
        return len(self.window)

    @classmethod
    def empty(cls, k: int) -> "AgentState":
        if k < 1:
            raise ValueError("window length must be >= 1")
        return cls(((PAD, PAD),) * k)

    @property
    def observation(self) -> int:
        return self.window[-1][0]


def agent_state_update(z: AgentState, a: int, o: int) -> AgentState:
    """Slide the window: drop the oldest pair, append ``(o, a)``."""
    return AgentState(z.window[1:] + ((int(o), int(a)),))


def initial_agent_state(k: int, o0: int) -> AgentState:
    return agent_state_update(AgentState.empty(k), PAD, o0)


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF on one uniform draw keeps the stream layout simple and fixed
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def reset(spec: PomdpSpec, rng: np.random.Generator, k: int = 1):
    """Sample ``s0 ~ P`` and ``o0 ~ E(.|s0)``; return ``(s0, o0, z0)``."""
    s = _sample(spec.initial, rng)
    o = _sample(spec.emission[s], rng)
    return s, o, initial_agent_state(k, o)


def step(spec: PomdpSpec, state: int, action: int, rng: np.random.Generator, t: int | None = None):
    """Advance one step from ``state``.

    ``t`` is the index of the current step; when given, ``done`` is also raised
    once ``t + 1`` reaches the horizon.
    """
    if not 0 <= state < spec.n_states:
        raise IndexError(f"state {state} out of range")
    if not 0 <= action < spec.n_actions:
        raise IndexError(f"action {action} out of range")
    if spec.terminal[state]:
        raise EpisodeDone(f"state {spec.states[state]!r} is terminal")
    if t is not None and t >= spec.horizon:
        raise EpisodeDone("horizon already reached")
    s_next = _sample(spec.transition[state, action], rng)
    r = float(spec.reward[state, action])
    if spec.reward_noise > 0:
        r += float(rng.uniform(-spec.reward_noise, spec.reward_noise))
    o_next = _sample(spec.emission[s_next], rng)
    done = bool(spec.terminal[s_next]) or (t is not None and t + 1 >= spec.horizon)
    return s_next, r, o_next, done


@dataclass
class EnvAgentMdp:
    """Fully observed MDP over reachable pairs ``(s, z)``.

    ``P`` has one row per ``(joint, action)`` pair (row index ``j * A + a``).
    Every terminal environment state collapses to a single absorbing joint
    node whose window is all ``TERMINAL_PAIR``.
    """

    spec: PomdpSpec
    k: int
    with_actions: bool
    joint_s: np.ndarray
    joint_z: np.ndarray
    windows: list[tuple[tuple[int, int], ...]]
    P: sp.csr_matrix
    R: np.ndarray
    initial: np.ndarray
    is_terminal: np.ndarray
    _z_index: dict = field(default_factory=dict, repr=False)

    @property
    def gamma(self) -> float:
        return self.spec.gamma

    @property
    def n_joint(self) -> int:
        return len(self.joint_s)

    @property
    def n_z(self) -> int:
        return len(self.windows)

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def z_index(self, z: AgentState | tuple) -> int:
        if not self._z_index:
            self._z_index.update({w: i for i, w in enumerate(self.windows)})
        w = z.window if isinstance(z, AgentState) else tuple(z)
        return self._z_index[w]

    def joint_policy(self, mu: np.ndarray) -> np.ndarray:
        """Lift a policy over agent states ``(Z, A)`` to joint states ``(J, A)``."""
        return np.asarray(mu)[self.joint_z]

    def transition_tensor(self) -> np.ndarray:
        """Dense ``(J, A, J)`` copy of the joint dynamics (small MDPs only)."""
        return self.P.toarray().reshape(self.n_joint, self.n_actions, self.n_joint)


def window_base(spec: PomdpSpec) -> int:
    return (spec.n_observations + 1) * (spec.n_actions + 1)


def decode_window(code: int, base: int, n_actions: int, k: int) -> tuple[tuple[int, int], ...]:
    if code < 0:
        return (TERMINAL_PAIR,) * k
    pairs = []
    for _ in range(k):
        code, c = divmod(code, base)
        o, a = divmod(c, n_actions + 1)
        pairs.append((o - 1, a - 1))
    return tuple(reversed(pairs))


def encode_window(window: Sequence[tuple[int, int]], base: int, n_actions: int) -> int:
    code = 0
    for o, a in window:
        code = code * base + (o + 1) * (n_actions + 1) + (a + 1)
    return code


def build_env_agent_mdp(
    spec: PomdpSpec, k: int, with_actions: bool = True, cap: int = DEFAULT_JOINT_CAP
) -> EnvAgentMdp:
    """Breadth-first enumeration of the reachable ``(s, z)`` pairs.

    ``p(s', z' | s, z, a) = T(s'|s,a) * sum_o' E(o'|s') 1{z' = u(z, a, o')}``.
    With ``with_actions=False`` the window stores only observations.
    """
    if k < 1:
        raise ValueError("window length must be >= 1")
    A = spec.n_actions
    base = window_base(spec)
    out = kernels.enumerate_joint(
        spec.transition, spec.emission, spec.initial, spec.terminal,
        k, base, bool(with_actions), int(cap),
    )
    if out is None:
        raise CapacityError(f"more than {cap} reachable joint states")
    joint_s, joint_code, indptr, indices, probs, init = out
    codes, joint_z = np.unique(joint_code, return_inverse=True)
    windows = [decode_window(int(c), base, A, k) for c in codes]
    J = len(joint_s)
    P = sp.csr_matrix((probs, indices, indptr), shape=(J * A, J))
    R = spec.reward[joint_s]
    return EnvAgentMdp(
        spec=spec,
        k=k,
        with_actions=with_actions,
        joint_s=joint_s,
        joint_z=joint_z.astype(np.int64),
        windows=windows,
        P=P,
        R=R,
        initial=init,
        is_terminal=spec.terminal[joint_s],
    )
