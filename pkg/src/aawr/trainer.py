"""Offline-to-online training of advantage-weighted policies and their deployment.

Methods:

* ``aawr``: critics read the privileged vector plus the agent-state window.
* ``sawr``: critics read the agent-state window only.
* ``bc``: no critics; the policy imitates successful demonstration episodes.

The policy network always reads the agent-state window and nothing else.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from aawr import nn
from aawr.buffer import ReplayBuffer, Transition, read_episodes
from aawr.envs import ConfigError, EnvCatalogEntry, make_env, scripted_demo_rollouts
from aawr.losses import (
    Batch, TrainingConfig, aawr_policy_loss, bc_loss, q_td_loss, sawr_policy_loss, v_expectile_loss,
)
from aawr.pomdp import _sample, agent_state_update, initial_agent_state, step

METHODS = ("aawr", "sawr", "bc")

METRIC_COLUMNS = [
    "phase", "grad_step", "env_step", "success_rate", "mean_return", "mean_episode_length",
    "q_loss", "v_loss", "pi_loss", "weight_mean", "weight_max", "weight_clipped_frac",
]


# --------------------------------------------------------------------------
# Features


class Featurizer:
    """One-hot encodings of windows and privileged vectors as sparse rows.

    Each window slot contributes one observation index (PAD included) and one
    previous-action index (PAD included).
    """

    def __init__(self, n_obs: int, n_actions: int, k: int, privileged_dim: int = 0):
        self.n_obs, self.n_actions, self.k = n_obs, n_actions, k
        self.block = (n_obs + 1) + (n_actions + 1)
        self.window_dim = k * self.block
        self.privileged_dim = privileged_dim
        self._offsets = np.arange(k) * self.block

    def window_indices(self, z: np.ndarray) -> np.ndarray:
        """``z``: ``(B, k, 2)`` of (observation, previous action) with PAD = -1."""
        o_idx = self._offsets + (z[:, :, 0] + 1)
        a_idx = self._offsets + (self.n_obs + 1) + (z[:, :, 1] + 1)
        return np.concatenate([o_idx, a_idx], axis=1)

    def policy_input(self, z: np.ndarray) -> nn.SparseBatch:
        idx = self.window_indices(z)
        return nn.SparseBatch(idx, np.ones(idx.shape), self.window_dim)

    def critic_input(self, z: np.ndarray, o_p: np.ndarray | None) -> nn.SparseBatch:
        idx = self.window_indices(z)
        val = np.ones(idx.shape)
        if o_p is None:
            return nn.SparseBatch(idx, val, self.window_dim)
        d = self.privileged_dim
        p_idx = np.broadcast_to(self.window_dim + np.arange(d), (len(z), d))
        return nn.SparseBatch(np.concatenate([idx, p_idx], axis=1), np.concatenate([val, o_p], axis=1),
                              self.window_dim + d)


def windows_array(windows) -> np.ndarray:
    return np.asarray([list(w) for w in windows], dtype=np.int64).reshape(len(windows), -1, 2)


# --------------------------------------------------------------------------
# Agent


@dataclass
class Agent:
    cfg: TrainingConfig
    method: str
    featurizer: Featurizer
    policy: nn.MlpParams
    q: nn.MlpParams | None = None
    v: nn.MlpParams | None = None
    q_target: nn.MlpParams | None = None
    v_target: nn.MlpParams | None = None
    opt: dict = field(default_factory=dict)
    grad_steps: int = 0
    env_steps: int = 0

    @property
    def privileged(self) -> bool:
        return self.method == "aawr"

    def nets(self) -> dict[str, nn.MlpParams]:
        out = {"policy": self.policy}
        for name in ("q", "v", "q_target", "v_target"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out

    def action_probs(self, z: np.ndarray) -> np.ndarray:
        logits = nn.predict(self.policy, self.featurizer.policy_input(z))
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)


def make_agent(cfg: TrainingConfig, method: str, n_obs: int, n_actions: int, privileged_dim: int) -> Agent:
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    cfg.validate()
    feat = Featurizer(n_obs, n_actions, cfg.k, privileged_dim if method == "aawr" else 0)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(3)
    hidden = list(cfg.hidden)
    policy = nn.mlp_init([feat.window_dim] + hidden + [n_actions], int(seeds[0]), cfg.activation)
    agent = Agent(cfg, method, feat, policy)
    agent.opt["policy"] = nn.adam_init(policy)
    if method != "bc":
        n_in = feat.window_dim + feat.privileged_dim
        agent.q = nn.mlp_init([n_in] + hidden + [n_actions], int(seeds[1]), cfg.activation)
        agent.v = nn.mlp_init([n_in] + hidden + [1], int(seeds[2]), cfg.activation)
        agent.q_target, agent.v_target = agent.q.copy(), agent.v.copy()
        agent.opt["q"] = nn.adam_init(agent.q)
        agent.opt["v"] = nn.adam_init(agent.v)
    return agent


def save_agent(agent: Agent, path) -> None:
    extra = {"method": agent.method, "config": asdict(agent.cfg), "grad_steps": agent.grad_steps,
             "env_steps": agent.env_steps, "n_obs": agent.featurizer.n_obs,
             "n_actions": agent.featurizer.n_actions, "privileged_dim": agent.featurizer.privileged_dim}
    nn.save_checkpoint(path, agent.nets(), agent.opt, extra)


def load_agent(path) -> Agent:
    nets, opts, extra = nn.load_checkpoint(path)
    cfg = TrainingConfig(**extra["config"])
    feat = Featurizer(extra["n_obs"], extra["n_actions"], cfg.k, extra["privileged_dim"])
    agent = Agent(cfg, extra["method"], feat, nets["policy"], nets.get("q"), nets.get("v"),
                  nets.get("q_target"), nets.get("v_target"), opts, extra["grad_steps"], extra["env_steps"])
    return agent


# --------------------------------------------------------------------------
# Batches and updates


def make_batch(agent: Agent, buffers_and_rows) -> Batch:
    """Stack rows drawn from one or more buffers into a featurized batch."""
    parts = [(buf, np.asarray(rows, dtype=np.int64)) for buf, rows in buffers_and_rows if len(rows)]
    z = np.concatenate([b.z[r] for b, r in parts])
    z_next = np.concatenate([b.z_next[r] for b, r in parts])
    a = np.concatenate([b.a[r] for b, r in parts])
    rew = np.concatenate([b.r[r] for b, r in parts])
    done = np.concatenate([b.done[r] for b, r in parts]).astype(np.float64)
    feat = agent.featurizer
    if agent.privileged:
        o_p = np.concatenate([b.o_p[r] for b, r in parts])
        o_p_next = np.concatenate([b.o_p_next[r] for b, r in parts])
        cx, cxn = feat.critic_input(z, o_p), feat.critic_input(z_next, o_p_next)
        mode = "privileged"
    else:
        cx, cxn = feat.critic_input(z, None), feat.critic_input(z_next, None)
        mode = "symmetric"
    return Batch(mode, cx, cxn, feat.policy_input(z), a, rew, done)


class LossLog:
    def __init__(self):
        self.sums: dict[str, float] = {}
        self.n = 0

    def add(self, **vals) -> None:
        for key, val in vals.items():
            self.sums[key] = self.sums.get(key, 0.0) + val
        self.n += 1

    def means(self) -> dict[str, float]:
        out = {key: total / self.n for key, total in self.sums.items()} if self.n else {}
        self.sums, self.n = {}, 0
        return out


def gradient_step(agent: Agent, batch: Batch, log: LossLog | None = None, advantage: np.ndarray | None = None) -> None:
    """One critic and actor update. ``advantage`` replaces the critic estimate when given."""
    cfg = agent.cfg
    if agent.method == "bc":
        res = bc_loss(batch, agent.policy)
        nn.adam_step(agent.policy, res.grads, agent.opt["policy"], cfg.lr_actor)
        if log is not None:
            log.add(pi_loss=res.loss)
        agent.grad_steps += 1
        return
    q_res = q_td_loss(batch, agent.q, agent.v_target, cfg.gamma)
    v_res = v_expectile_loss(batch, agent.v, agent.q_target, cfg.tau)
    nn.adam_step(agent.q, q_res.grads, agent.opt["q"], cfg.lr_critic)
    nn.adam_step(agent.v, v_res.grads, agent.opt["v"], cfg.lr_critic)
    if advantage is None:
        # the value loss already evaluated Q_target(x, a) and V(x) on this batch
        advantage = v_res.info["q_taken"] - v_res.info["v"]
    loss_fn = aawr_policy_loss if agent.privileged else sawr_policy_loss
    p_res = loss_fn(batch, agent.policy, agent.q_target, agent.v, cfg.beta, cfg.weight_clip, advantage)
    nn.adam_step(agent.policy, p_res.grads, agent.opt["policy"], cfg.lr_actor)
    nn.polyak_update(agent.q_target, agent.q, cfg.target_update_rate)
    nn.polyak_update(agent.v_target, agent.v, cfg.target_update_rate)
    if log is not None:
        log.add(q_loss=q_res.loss, v_loss=v_res.loss, pi_loss=p_res.loss, weight_mean=p_res.info["weight_mean"],
                weight_max=p_res.info["weight_max"], weight_clipped_frac=p_res.info["weight_clipped_frac"])
    agent.grad_steps += 1


# --------------------------------------------------------------------------
# Deployment


class PrivilegedAccessError(RuntimeError):
    """Deployment code touched a field that only exists at training time."""


class Poison:
    """Stands in for privileged data; any use raises."""

    def _fail(self, *args, **kwargs):
        raise PrivilegedAccessError("privileged field read during deployment")

    __getattr__ = __getitem__ = __iter__ = __len__ = __array__ = __index__ = __int__ = __float__ = _fail
    __eq__ = __lt__ = __gt__ = __le__ = __ge__ = __add__ = __radd__ = __mul__ = __rmul__ = __bool__ = _fail
    __hash__ = None


@dataclass
class StepOutput:
    o: int
    r: float
    done: bool
    s: object = None
    o_p: object = None


class DeploymentEnv:
    """Environment handle exposing observations, rewards and termination flags."""

    def __init__(self, entry: EnvCatalogEntry, rng: np.random.Generator):
        self.entry, self.rng = entry, rng
        self._s = None
        self._t = 0

    def reset(self) -> StepOutput:
        spec = self.entry.spec
        self._s = _sample(spec.initial, self.rng)
        self._t = 0
        o = _sample(spec.emission[self._s], self.rng)
        return self._out(o, 0.0, False)

    def step(self, a: int) -> StepOutput:
        s2, r, o2, done = step(self.entry.spec, self._s, a, self.rng, t=self._t)
        self._s, self._t = s2, self._t + 1
        return self._out(o2, r, done)

    def _out(self, o, r, done) -> StepOutput:
        return StepOutput(o, r, done, self._s, self.entry.privileged_table[self._s])


class PoisonedEnv(DeploymentEnv):
    """Same dynamics, but the state and privileged fields are poisoned."""

    def _out(self, o, r, done) -> StepOutput:
        return StepOutput(o, r, done, Poison(), Poison())


@dataclass
class EvalResult:
    success_rate: float
    mean_return: float
    mean_episode_length: float
    returns: np.ndarray
    lengths: np.ndarray
    actions: list


def evaluate(agent: Agent, entry: EnvCatalogEntry, n_episodes: int, seed: int, greedy: bool = True,
             env_cls=DeploymentEnv) -> EvalResult:
    """Run the policy on ``n_episodes`` episodes using only observations.

    Episodes advance in lockstep so one forward pass serves all of them; each
    episode owns a derived random stream, so results do not depend on the
    batching.
    """
    if n_episodes <= 0:
        return EvalResult(0.0, 0.0, 0.0, np.zeros(0), np.zeros(0, dtype=np.int64), [])
    k = agent.cfg.k
    children = np.random.SeedSequence([seed, 0xE7A1]).spawn(n_episodes)
    rngs = [np.random.default_rng(c) for c in children]
    envs = [env_cls(entry, rng) for rng in rngs]
    windows = []
    for env in envs:
        out = env.reset()
        windows.append(initial_agent_state(k, out.o))
    active = list(range(n_episodes))
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)
    success = np.zeros(n_episodes, dtype=bool)
    finished = np.zeros(n_episodes, dtype=bool)
    actions: list[list[int]] = [[] for _ in range(n_episodes)]
    while active:
        z = windows_array([windows[i].window for i in active])
        probs = agent.action_probs(z)
        for row, i in enumerate(active):
            if greedy:
                a = int(np.argmax(probs[row]))
            else:
                a = _sample(probs[row], rngs[i])
            out = envs[i].step(a)
            actions[i].append(a)
            returns[i] += out.r * agent.cfg.gamma ** lengths[i]
            lengths[i] += 1
            if out.done:
                success[i] = out.r > 0
                finished[i] = True
            else:
                windows[i] = agent_state_update(windows[i], a, out.o)
        active = [i for i in active if not finished[i]]
    return EvalResult(float(success.mean()), float(returns.mean()), float(lengths.mean()), returns, lengths, actions)


# --------------------------------------------------------------------------
# Training phases


@dataclass
class RunMetrics:
    rows: list = field(default_factory=list)

    def add(self, phase: str, agent: Agent, result: EvalResult, losses: dict) -> None:
        row = {"phase": phase, "grad_step": agent.grad_steps, "env_step": agent.env_steps,
               "success_rate": result.success_rate, "mean_return": result.mean_return,
               "mean_episode_length": result.mean_episode_length}
        for col in METRIC_COLUMNS[6:]:
            row[col] = losses.get(col, float("nan"))
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read(cls, path) -> "RunMetrics":
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        out = cls()
        for row in rows:
            parsed = {"phase": row["phase"]}
            for col in METRIC_COLUMNS[1:]:
                parsed[col] = int(row[col]) if col in ("grad_step", "env_step") else float(row[col])
            out.rows.append(parsed)
        return out


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class EvalSchedule:
    every_grad: int = 2000
    every_env: int = 2000
    episodes: int = 50
    final_episodes: int = 200
    greedy: bool = True
    seed: int = 0


def _eval_row(agent, entry, metrics, phase, schedule, log, n_episodes=None):
    # the evaluation stream depends on the step counters only, never on the training stream
    seed = schedule.seed * 1_000_003 + agent.grad_steps * 7919 + agent.env_steps
    res = evaluate(agent, entry, n_episodes or schedule.episodes, seed, schedule.greedy)
    metrics.add(phase, agent, res, log.means() if log is not None else {})
    return res


def success_buffer(d_off: ReplayBuffer) -> np.ndarray:
    rows = d_off.success_indices()
    if len(rows) == 0:
        raise ConfigError("behavior cloning needs at least one successful episode")
    return rows


def offline_phase(agent: Agent, d_off: ReplayBuffer, rng: np.random.Generator, entry: EnvCatalogEntry | None = None,
                  metrics: RunMetrics | None = None, schedule: EvalSchedule | None = None,
                  advantage_fn=None) -> Agent:
    """``n_off`` gradient steps on the offline buffer.

    ``advantage_fn(buffer, rows)``, when given, supplies the advantages used
    by the actor instead of the learned critics.
    """
    cfg = agent.cfg
    if len(d_off) == 0:
        raise ConfigError("offline buffer is empty")
    if agent.privileged and (d_off.privileged_dim is None or d_off.privileged_dim != agent.featurizer.privileged_dim):
        raise ConfigError("privileged-critic training needs privileged fields in the offline buffer")
    pool = success_buffer(d_off) if agent.method == "bc" else None
    log = LossLog()
    schedule = schedule or EvalSchedule()
    for _ in range(cfg.n_off):
        if pool is not None:
            rows = pool[rng.integers(0, len(pool), size=cfg.batch_size)]
        else:
            rows = d_off.sample_indices(rng, cfg.batch_size)
        batch = make_batch(agent, [(d_off, rows)])
        adv = advantage_fn(d_off, rows) if advantage_fn is not None else None
        gradient_step(agent, batch, log, adv)
        if entry is not None and metrics is not None and agent.grad_steps % schedule.every_grad == 0:
            _eval_row(agent, entry, metrics, "offline", schedule, log)
    return agent


def collect_episode(agent: Agent, entry: EnvCatalogEntry, rng: np.random.Generator, episode_id: int) -> list[Transition]:
    """Roll out the current policy, sampling actions; privileged fields are recorded for the critics."""
    spec = entry.spec
    k = agent.cfg.k
    s = _sample(spec.initial, rng)
    o = _sample(spec.emission[s], rng)
    z = initial_agent_state(k, o)
    o_p = tuple(entry.privileged_map(s, rng))
    episode = []
    for t in range(spec.horizon):
        probs = agent.action_probs(windows_array([z.window]))[0]
        a = _sample(probs, rng)
        s2, r, o2, done = step(spec, s, a, rng, t=t)
        o_p2 = tuple(entry.privileged_map(s2, rng))
        episode.append(Transition(episode_id, t, o, o_p, a, r, o2, o_p2, done, s, s2))
        if done:
            break
        z = agent_state_update(z, a, o2)
        s, o, o_p = s2, o2, o_p2
    return episode


def online_phase(agent: Agent, entry: EnvCatalogEntry, d_off: ReplayBuffer, rng: np.random.Generator,
                 metrics: RunMetrics | None = None, schedule: EvalSchedule | None = None,
                 d_on_capacity: int = 100_000) -> tuple[Agent, ReplayBuffer]:
    """Alternate one sampled episode with as many gradient steps as it had transitions.

    Each batch takes half its rows from the offline buffer and half from the
    online buffer.
    """
    cfg = agent.cfg
    if agent.privileged and entry.privileged_dim != agent.featurizer.privileged_dim:
        raise ConfigError("environment does not provide the privileged vector the critics expect")
    schedule = schedule or EvalSchedule()
    d_on = ReplayBuffer(cfg.k, entry.privileged_dim, capacity=d_on_capacity)
    half = cfg.batch_size // 2
    log = LossLog()
    next_eval = (agent.env_steps // schedule.every_env + 1) * schedule.every_env
    start = agent.env_steps
    episode_id = 0
    while agent.env_steps - start < cfg.n_on:
        episode = collect_episode(agent, entry, rng, episode_id)
        episode_id += 1
        d_on.add_episode(episode)
        agent.env_steps += len(episode)
        for _ in range(len(episode)):
            rows_off = d_off.sample_indices(rng, half)
            rows_on = d_on.sample_indices(rng, half)
            gradient_step(agent, make_batch(agent, [(d_off, rows_off), (d_on, rows_on)]), log)
        if metrics is not None and agent.env_steps >= next_eval:
            _eval_row(agent, entry, metrics, "online", schedule, log)
            next_eval = (agent.env_steps // schedule.every_env + 1) * schedule.every_env
    return agent, d_on


# --------------------------------------------------------------------------
# End-to-end run


@dataclass
class RunConfig:
    env: str = "hidden_target_grid"
    env_params: dict = field(default_factory=dict)
    method: str = "aawr"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    n_demos: int = 100
    demo_seed: int = 0
    demo_path: str | None = None
    eval: EvalSchedule = field(default_factory=EvalSchedule)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        self.training.validate()
        if self.n_demos < 0:
            raise ConfigError("n_demos must be nonnegative")
        if self.eval.every_grad < 1 or self.eval.every_env < 1 or self.eval.episodes < 1 or self.eval.final_episodes < 1:
            raise ConfigError("evaluation cadence and episode counts must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {"env", "env_params", "method", "training", "n_demos", "demo_seed", "demo_path", "eval"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        training = TrainingConfig.from_dict(d.pop("training", {}))
        ev = d.pop("eval", {})
        try:
            schedule = EvalSchedule(**ev)
        except TypeError as exc:
            raise ConfigError(f"bad eval section: {exc}") from None
        cfg = cls(training=training, eval=schedule, **d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    agent: Agent
    metrics: RunMetrics
    demo_success: float
    offline_eval: EvalResult
    final_eval: EvalResult


def demo_buffer(entry: EnvCatalogEntry, episodes, k: int) -> ReplayBuffer:
    n = max(sum(len(e) for e in episodes), 1)
    buf = ReplayBuffer(k, entry.privileged_dim, capacity=n)
    buf.add_episodes(episodes)
    return buf


def run(cfg: RunConfig, episodes=None) -> RunResult:
    """Demos, offline phase, evaluation, then the online phase when ``n_on > 0`` (never for BC)."""
    cfg.validate()
    entry = make_env(cfg.env, **cfg.env_params)
    tc = cfg.training
    if episodes is None and cfg.demo_path:
        episodes = read_episodes(cfg.demo_path, privileged=True)
    if episodes is None:
        episodes = scripted_demo_rollouts(entry, cfg.n_demos, seed=cfg.demo_seed)
    demo_success = float(np.mean([ep[-1].done and ep[-1].r > 0 for ep in episodes])) if episodes else 0.0
    d_off = demo_buffer(entry, episodes, tc.k)
    agent = make_agent(tc, cfg.method, entry.spec.n_observations, entry.spec.n_actions, entry.privileged_dim)
    train_rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 0x7EA1]))
    metrics = RunMetrics()
    sched = cfg.eval
    offline_eval = _eval_row(agent, entry, metrics, "init", sched, None, sched.final_episodes)
    if tc.n_off > 0:
        offline_phase(agent, d_off, train_rng, entry, metrics, sched)
        offline_eval = _eval_row(agent, entry, metrics, "offline_final", sched, LossLog(), sched.final_episodes)
    final_eval = offline_eval
    if tc.n_on > 0 and cfg.method != "bc":
        online_phase(agent, entry, d_off, train_rng, metrics, sched)
        final_eval = _eval_row(agent, entry, metrics, "final", sched, LossLog(), sched.final_episodes)
    return RunResult(agent, metrics, demo_success, offline_eval, final_eval)
