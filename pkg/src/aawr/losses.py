"""Critic and actor objectives.

Every loss returns a :class:`LossResult` holding the scalar loss, the
gradient of the loss with respect to the one network it trains (in
:meth:`MlpParams.arrays` order) and a few diagnostics. Networks that only
provide targets or weights never receive gradients.

Critic networks output one value per action (Q) or a single value (V); the
policy network outputs categorical logits over actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from aawr import nn
from aawr.envs import ConfigError


@dataclass
class TrainingConfig:
    beta: float = 10.0
    tau: float = 0.7
    gamma: float = 0.95
    weight_clip: float = 100.0
    n_off: int = 20_000
    n_on: int = 20_000
    batch_size: int = 256
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    target_update_rate: float = 0.005
    k: int = 6
    seed: int = 0
    hidden: list = field(default_factory=lambda: [64, 64])
    activation: str = "relu"

    def validate(self) -> None:
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.weight_clip < 1.0:
            raise ConfigError("weight_clip must be at least 1")
        if self.n_off < 0 or self.n_on < 0:
            raise ConfigError("budgets must be nonnegative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError("batch_size must be an even integer >= 2")
        if self.k < 1:
            raise ConfigError("window length k must be at least 1")
        if not 0.0 < self.target_update_rate <= 1.0:
            raise ConfigError("target_update_rate must lie in (0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")
        if self.activation not in nn.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {nn.ACTIVATIONS}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training fields {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class Batch:
    """Featurized transitions.

    ``critic_x`` / ``critic_x_next`` are the critic inputs at ``(s, z)`` and
    ``(s', z')`` in privileged mode, or at ``z`` and ``z'`` in symmetric mode.
    ``policy_x`` is always built from ``z`` alone.
    """

    mode: str
    critic_x: object
    critic_x_next: object
    policy_x: object
    a: np.ndarray
    r: np.ndarray
    done: np.ndarray

    def __post_init__(self):
        if self.mode not in ("privileged", "symmetric"):
            raise ValueError(f"unknown batch mode {self.mode!r}")
        if len(self.a) == 0:
            raise ValueError("empty batch")

    def __len__(self) -> int:
        return len(self.a)


@dataclass
class LossResult:
    loss: float
    grads: list
    info: dict = field(default_factory=dict)


def _check_critic(batch: Batch, net: nn.MlpParams, expected_mode: str | None = None) -> None:
    if expected_mode is not None and batch.mode != expected_mode:
        raise ValueError(f"{expected_mode} loss given a {batch.mode} batch")
    width = batch.critic_x.n_in if isinstance(batch.critic_x, nn.SparseBatch) else np.shape(batch.critic_x)[1]
    if net.layer_sizes[0] != width:
        raise ValueError(f"critic expects {net.layer_sizes[0]} inputs, batch provides {width} ({batch.mode} mode)")


def q_td_loss(batch: Batch, q_net: nn.MlpParams, v_target_net: nn.MlpParams, gamma: float) -> LossResult:
    """``mean (r + gamma (1 - done) V_target(x') - Q(x, a))^2``."""
    _check_critic(batch, q_net)
    n = len(batch)
    v_next = nn.predict(v_target_net, batch.critic_x_next)[:, 0]
    target = batch.r + gamma * (1.0 - batch.done) * v_next
    q_all, cache = nn.forward(q_net, batch.critic_x)
    rows = np.arange(n)
    err = q_all[rows, batch.a] - target
    g = np.zeros_like(q_all)
    g[rows, batch.a] = 2.0 * err / n
    return LossResult(float(np.mean(err ** 2)), nn.backward(q_net, cache, g), {"q_mean": float(q_all[rows, batch.a].mean())})


def expectile_weights(u: np.ndarray, tau: float) -> np.ndarray:
    return np.where(u < 0, 1.0 - tau, tau)


def v_expectile_loss(batch: Batch, v_net: nn.MlpParams, q_target_net: nn.MlpParams, tau: float) -> LossResult:
    """``mean |tau - 1{Q - V < 0}| (Q - V)^2`` with ``Q`` from the frozen target network."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    _check_critic(batch, v_net)
    n = len(batch)
    q = nn.predict(q_target_net, batch.critic_x)[np.arange(n), batch.a]
    v, cache = nn.forward(v_net, batch.critic_x)
    u = q - v[:, 0]
    w = expectile_weights(u, tau)
    g = (-2.0 * w * u / n)[:, None]
    info = {"v_mean": float(v.mean()), "q_taken": q, "v": v[:, 0]}
    return LossResult(float(np.mean(w * u * u)), nn.backward(v_net, cache, g), info)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _weighted_nll(policy_net: nn.MlpParams, policy_x, a: np.ndarray, w: np.ndarray) -> LossResult:
    n = len(a)
    logits, cache = nn.forward(policy_net, policy_x)
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -float(np.mean(w * logp[rows, a]))
    g = np.exp(logp)
    g[rows, a] -= 1.0
    g *= (w / n)[:, None]
    return LossResult(loss, nn.backward(policy_net, cache, g))


def advantage_weights(adv: np.ndarray, beta: float, weight_clip: float) -> np.ndarray:
    # exponent capped at log(weight_clip) first so huge advantages cannot overflow
    return np.exp(np.minimum(adv / beta, np.log(weight_clip)))


def critic_advantage(batch: Batch, q_net: nn.MlpParams, v_net: nn.MlpParams) -> np.ndarray:
    n = len(batch)
    q = nn.predict(q_net, batch.critic_x)[np.arange(n), batch.a]
    v = nn.predict(v_net, batch.critic_x)[:, 0]
    return q - v


def awr_policy_loss(batch: Batch, policy_net: nn.MlpParams, q_net: nn.MlpParams, v_net: nn.MlpParams,
                    beta: float, weight_clip: float, advantage: np.ndarray | None = None) -> LossResult:
    """``-mean min(exp(A / beta), W_max) log pi(a | z)`` with the critics held fixed.

    ``advantage`` overrides the critic estimate (used to inject exact tables).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    adv = critic_advantage(batch, q_net, v_net) if advantage is None else np.asarray(advantage, dtype=np.float64)
    w = advantage_weights(adv, beta, weight_clip)
    res = _weighted_nll(policy_net, batch.policy_x, batch.a, w)
    res.info = {
        "adv_mean": float(adv.mean()),
        "weight_mean": float(w.mean()),
        "weight_max": float(w.max()),
        "weight_clipped_frac": float(np.mean(adv / beta >= np.log(weight_clip))),
    }
    return res


def aawr_policy_loss(batch: Batch, policy_net, q_net, v_net, beta: float, weight_clip: float,
                     advantage: np.ndarray | None = None) -> LossResult:
    """Advantage-weighted regression with critics that see the environment state."""
    if batch.mode != "privileged":
        raise ValueError("privileged-critic loss given a symmetric batch")
    return awr_policy_loss(batch, policy_net, q_net, v_net, beta, weight_clip, advantage)


def sawr_policy_loss(batch: Batch, policy_net, q_net, v_net, beta: float, weight_clip: float,
                     advantage: np.ndarray | None = None) -> LossResult:
    """Advantage-weighted regression with critics restricted to the agent state."""
    if batch.mode != "symmetric":
        raise ValueError("agent-state-critic loss given a privileged batch")
    return awr_policy_loss(batch, policy_net, q_net, v_net, beta, weight_clip, advantage)


def bc_loss(batch: Batch, policy_net: nn.MlpParams) -> LossResult:
    """``-mean log pi(a | z)``; callers restrict the batch to successful episodes."""
    return _weighted_nll(policy_net, batch.policy_x, batch.a, np.ones(len(batch)))


def returns_to_go(episodes, gamma: float) -> np.ndarray:
    """Discounted returns for each transition of complete episodes, concatenated."""
    out = []
    for ep in episodes:
        if not ep or not ep[-1].done:
            eid = ep[0].episode_id if ep else "?"
            raise ValueError(f"episode {eid} is incomplete: last transition is not done")
        acc = 0.0
        ret = np.zeros(len(ep))
        for i in range(len(ep) - 1, -1, -1):
            acc = ep[i].r + gamma * acc
            ret[i] = acc
        out.append(ret)
    return np.concatenate(out) if out else np.zeros(0)


def mc_value_loss(x, returns: np.ndarray, v_net: nn.MlpParams) -> LossResult:
    """``mean (G_t - V(x_t))^2`` against Monte-Carlo returns-to-go."""
    returns = np.asarray(returns, dtype=np.float64)
    if len(returns) == 0:
        raise ValueError("no returns given")
    v, cache = nn.forward(v_net, x)
    err = v[:, 0] - returns
    g = (2.0 * err / len(returns))[:, None]
    return LossResult(float(np.mean(err ** 2)), nn.backward(v_net, cache, g))
