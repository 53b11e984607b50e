"""Clipped-surrogate policy gradient for the worker environment.

Every worker owns a one-hidden-layer network mapping the shared observation
(all fatigue values plus the remaining-budget ratio) to the probability of
participating. Training alternates seeded rollouts with minibatch updates of
the clipped surrogate objective; advantages come from generalized advantage
estimation against a per-agent learned value baseline.

Gradients are derived by hand so the objective can be checked against finite
differences (see :func:`surrogate_objective` / :func:`surrogate_gradient`).
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .env import ACTION_STREAM, EnvConfig, Transition, WorkerEnv, counter_rng, episode_key, episode_totals
from .model import DomainError

log = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "w2", "b2")
POLICY_FORMAT = "fedincentive-policy v1"
TRAIN_LOG_COLUMNS = ("iteration", "mean_return", "min_return", "max_return", "entropy")


class TrainingError(RuntimeError):
    pass


class OracleTooLargeError(ValueError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_sigmoid(z):
    # log(sigmoid(z)) without overflow
    return -np.logaddexp(0.0, -z)


class AgentMlp:
    """A stack of small tanh networks, one per agent (or one shared).

    Parameters have a leading agent axis of size ``n_agents`` (or 1 when
    shared): ``W1 (A,H,D)``, ``b1 (A,H)``, ``w2 (A,H)``, ``b2 (A,)``.
    """

    def __init__(self, params: dict[str, np.ndarray], n_agents: int):
        self.params = params
        self.n_agents = n_agents

    @classmethod
    def init(cls, n_agents: int, input_dim: int, hidden: int, rng: np.random.Generator,
             shared: bool = False, out_scale: float = 0.01) -> "AgentMlp":
        a = 1 if shared else n_agents
        params = {
            "W1": rng.normal(0.0, 1.0 / math.sqrt(input_dim), size=(a, hidden, input_dim)),
            "b1": np.zeros((a, hidden)),
            "w2": rng.normal(0.0, out_scale, size=(a, hidden)),
            "b2": np.zeros(a),
        }
        return cls(params, n_agents)

    @property
    def shared(self) -> bool:
        return self.params["b2"].shape[0] == 1 and self.n_agents > 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.params["W1"].shape

    def copy(self) -> "AgentMlp":
        return AgentMlp({k: v.copy() for k, v in self.params.items()}, self.n_agents)

    def _full(self, name):
        p = self.params[name]
        if p.shape[0] == self.n_agents:
            return p
        return np.broadcast_to(p, (self.n_agents,) + p.shape[1:])

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Outputs ``(N, A)`` for observations ``(N, D)``, plus hidden ``(N, A, H)``."""
        obs = np.atleast_2d(obs)
        pre = np.einsum("ahd,nd->nah", self._full("W1"), obs) + self._full("b1")
        h = np.tanh(pre)
        out = np.einsum("nah,ah->na", h, self._full("w2")) + self._full("b2")
        return out, h

    def backward(self, obs: np.ndarray, h: np.ndarray, d_out: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given ``d(loss)/d(out)`` of shape ``(N, A)``."""
        obs = np.atleast_2d(obs)
        g_w2 = np.einsum("na,nah->ah", d_out, h)
        g_b2 = d_out.sum(axis=0)
        d_pre = d_out[:, :, None] * self._full("w2")[None] * (1.0 - h**2)
        g_W1 = np.einsum("nah,nd->ahd", d_pre, obs)
        g_b1 = d_pre.sum(axis=0)
        grads = {"W1": g_W1, "b1": g_b1, "w2": g_w2, "b2": g_b2}
        if self.params["b2"].shape[0] != self.n_agents:
            grads = {k: v.sum(axis=0, keepdims=True) for k, v in grads.items()}
        return grads

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for k in PARAM_NAMES:
            p = self.params[k]
            self.params[k] = np.asarray(flat[i:i + p.size], dtype=float).reshape(p.shape)
            i += p.size


@dataclass
class Policy:
    """Per-worker participation policy. ``version`` counts training iterations."""

    actor: AgentMlp
    version: int = 0

    @property
    def n_agents(self) -> int:
        return self.actor.n_agents

    def logits(self, obs: np.ndarray) -> np.ndarray:
        return self.actor.forward(obs)[0]

    def action_probs(self, obs: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(obs))


@dataclass
class ConstantPolicy:
    """Stub that participates with a fixed probability (1.0 = always, 0.0 = never)."""

    n_agents: int
    prob: float = 1.0
    version: int = 0

    def action_probs(self, obs: np.ndarray) -> np.ndarray:
        return np.full((np.atleast_2d(obs).shape[0], self.n_agents), float(self.prob))


@dataclass(frozen=True)
class TrainConfig:
    episodes_per_iter: int = 8
    iterations: int = 1000
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    value_learning_rate: Optional[float] = None
    minibatch_size: int = 64
    update_epochs: int = 4
    entropy_coef: float = 0.0
    hidden: int = 32
    shared_weights: bool = False
    rollout_parallelism: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip_ratio < 1:
            raise DomainError("clip_ratio must lie in (0, 1)")
        if not 0 < self.discount <= 1:
            raise DomainError("discount must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise DomainError("gae_lambda must lie in [0, 1]")
        for name in ("episodes_per_iter", "minibatch_size", "update_epochs", "hidden",
                     "rollout_parallelism"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be > 0")


def clipped_surrogate(ratio, advantage, clip_ratio: float):
    """``min(r*A, clip(r, 1-eps, 1+eps)*A)``, elementwise."""
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("probability ratio must be > 0")
    adv = np.asarray(advantage, dtype=float)
    out = np.minimum(r * adv, np.clip(r, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv)
    return float(out) if out.ndim == 0 else out


def _log_probs(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.where(actions == 1, _log_sigmoid(logits), _log_sigmoid(-logits))


def _entropy(logits: np.ndarray) -> np.ndarray:
    p = _sigmoid(logits)
    return -(p * _log_sigmoid(logits) + (1.0 - p) * _log_sigmoid(-logits))


@dataclass
class Batch:
    """Frozen rollout samples: observations ``(N, D)``, per-agent arrays ``(N, A)``."""

    obs: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.logp_old[idx],
                     self.advantages[idx], self.returns[idx])


def surrogate_objective(actor: AgentMlp, batch: Batch, clip_ratio: float,
                        entropy_coef: float = 0.0) -> float:
    """Mean clipped surrogate (plus entropy bonus) over samples and agents."""
    z, _ = actor.forward(batch.obs)
    ratio = np.exp(_log_probs(z, batch.actions) - batch.logp_old)
    obj = clipped_surrogate(ratio, batch.advantages, clip_ratio)
    return float(np.mean(obj) + entropy_coef * np.mean(_entropy(z)))


def surrogate_gradient(actor: AgentMlp, batch: Batch, clip_ratio: float,
                       entropy_coef: float = 0.0) -> dict[str, np.ndarray]:
    """Gradient of :func:`surrogate_objective` with respect to ``actor.params``."""
    z, h = actor.forward(batch.obs)
    logp = _log_probs(z, batch.actions)
    ratio = np.exp(logp - batch.logp_old)
    adv = batch.advantages
    # the unclipped branch carries the gradient unless the clip is binding
    active = ((adv >= 0) & (ratio < 1.0 + clip_ratio)) | ((adv < 0) & (ratio > 1.0 - clip_ratio))
    p = _sigmoid(z)
    d_logp = batch.actions - p
    d_z = np.where(active, adv * ratio * d_logp, 0.0)
    d_z = d_z + entropy_coef * (-z * p * (1.0 - p))
    d_z /= d_z.size
    return actor.backward(batch.obs, h, d_z)


def value_loss_and_gradient(critic: AgentMlp, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    v, h = critic.forward(batch.obs)
    err = v - batch.returns
    loss = 0.5 * float(np.mean(err**2))
    return loss, critic.backward(batch.obs, h, err / err.size)


def gae(rewards: np.ndarray, values: np.ndarray, discount: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one terminated episode.

    ``rewards`` is ``(T, A)``; ``values`` is ``(T, A)`` (the terminal value is 0).
    """
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + discount * next_v - values[t]
        running = delta + discount * lam * running
        adv[t] = running
    return adv, adv + values


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, b1: float = 0.9,
                 b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def ascend(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            m_hat = self.m[k] / (1 - self.b1**self.t)
            v_hat = self.v[k] / (1 - self.b2**self.t)
            params[k] = params[k] + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Episode:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    transitions: list[Transition] = field(repr=False, default_factory=list)

    @property
    def returns(self) -> np.ndarray:
        """Undiscounted return per agent."""
        return self.rewards.sum(axis=0)


def run_episode(policy, env_config: EnvConfig, episode: int, greedy: bool = False) -> Episode:
    """Roll out one seeded episode. Action noise is counter-based like the env's."""
    env = WorkerEnv(env_config)
    state = env.reset(episode)
    key = episode_key(env_config.seed, episode)
    obs, acts, logps, rews, trs = [], [], [], [], []
    while not state.done:
        o = state.observation()
        p = policy.action_probs(o)[0]
        if greedy:
            a = (p >= 0.5).astype(int)
        else:
            a = (counter_rng(key, state.step, ACTION_STREAM).random(p.shape[0]) < p).astype(int)
        with np.errstate(divide="ignore"):
            lp = np.where(a == 1, np.log(p), np.log1p(-p))
        tr = env.step(a)
        obs.append(o)
        acts.append(a)
        logps.append(lp)
        rews.append(tr.rewards)
        trs.append(tr)
        state = tr.next_state
    return Episode(np.array(obs), np.array(acts), np.array(logps), np.array(rews), trs)


def _rollouts(policy, env_config: EnvConfig, episodes: Sequence[int], parallelism: int = 1,
              greedy: bool = False) -> list[Episode]:
    if parallelism <= 1:
        return [run_episode(policy, env_config, e, greedy) for e in episodes]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda e: run_episode(policy, env_config, e, greedy), episodes))


@dataclass
class TrainResult:
    policy: Policy
    log: list[dict]
    critic: AgentMlp = field(repr=False, default=None)


def init_policy(env_config: EnvConfig, train_config: TrainConfig) -> tuple[Policy, AgentMlp]:
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 0x5EED]))
    w, d = env_config.worker_count, env_config.obs_dim
    actor = AgentMlp.init(w, d, train_config.hidden, rng, shared=train_config.shared_weights)
    critic = AgentMlp.init(w, d, train_config.hidden, rng, shared=train_config.shared_weights,
                           out_scale=0.1)
    return Policy(actor, version=0), critic


def train(env_config: EnvConfig, train_config: TrainConfig,
          policy: Optional[Policy] = None, critic: Optional[AgentMlp] = None) -> TrainResult:
    """Train per-worker policies; returns the policy and a per-iteration log.

    Rollouts for training are keyed by ``train_config.seed`` (not the env's
    evaluation seed), episode ``i*episodes_per_iter + k`` for iteration ``i``.
    """
    tc = train_config
    if policy is None:
        policy, critic0 = init_policy(env_config, tc)
        critic = critic if critic is not None else critic0
    elif critic is None:
        _, critic = init_policy(env_config, tc)
    rollout_cfg = replace(env_config, seed=tc.seed)
    actor = policy.actor
    opt_pi = Adam(actor.params, tc.learning_rate)
    opt_v = Adam(critic.params, tc.value_learning_rate or tc.learning_rate)
    shuffle_key = np.random.SeedSequence([tc.seed, 0x5A4F]).generate_state(2, dtype=np.uint64)
    history = []
    for it in range(tc.iterations):
        ids = range(it * tc.episodes_per_iter, (it + 1) * tc.episodes_per_iter)
        episodes = _rollouts(policy, rollout_cfg, ids, tc.rollout_parallelism)
        batch = _build_batch(episodes, critic, tc)
        ep_returns = np.array([ep.returns.mean() for ep in episodes])
        if not np.all(np.isfinite(ep_returns)):
            raise TrainingError(f"non-finite return at iteration {it}: {ep_returns}")
        ent = float(np.mean(_entropy(actor.forward(batch.obs)[0])))
        history.append({"iteration": it, "mean_return": float(ep_returns.mean()),
                        "min_return": float(ep_returns.min()), "max_return": float(ep_returns.max()),
                        "entropy": ent})
        rng = counter_rng(shuffle_key, it, 0)
        n = len(batch)
        for _ in range(tc.update_epochs):
            order = rng.permutation(n)
            for start in range(0, n, tc.minibatch_size):
                mb = batch.subset(order[start:start + tc.minibatch_size])
                opt_pi.ascend(actor.params, surrogate_gradient(actor, mb, tc.clip_ratio, tc.entropy_coef))
                _, g_v = value_loss_and_gradient(critic, mb)
                opt_v.ascend(critic.params, {k: -g for k, g in g_v.items()})
        if not all(np.all(np.isfinite(p)) for p in actor.params.values()):
            raise TrainingError(f"policy parameters diverged at iteration {it}; last log {history[-1]}")
        policy.version += 1
        if it % 50 == 0:
            log.debug("iter %d mean_return %.5f entropy %.4f", it, history[-1]["mean_return"], ent)
    return TrainResult(policy, history, critic)


def _build_batch(episodes: list[Episode], critic: AgentMlp, tc: TrainConfig) -> Batch:
    obs, acts, logp, advs, rets = [], [], [], [], []
    for ep in episodes:
        values, _ = critic.forward(ep.obs)
        adv, ret = gae(ep.rewards, values, tc.discount, tc.gae_lambda)
        obs.append(ep.obs)
        acts.append(ep.actions)
        logp.append(ep.logp)
        advs.append(adv)
        rets.append(ret)
    adv = np.concatenate(advs)
    std = adv.std(axis=0)
    adv = (adv - adv.mean(axis=0)) / np.where(std > 1e-8, std, 1.0)
    return Batch(np.concatenate(obs), np.concatenate(acts), np.concatenate(logp), adv,
                 np.concatenate(rets))


@dataclass
class EvalResult:
    mean_total_data: float
    mean_total_paid: float
    mean_returns: np.ndarray


def evaluate(policy, env_config: EnvConfig, episodes: int, greedy: bool = False,
             cost: str = "disbursed", parallelism: int = 1) -> EvalResult:
    """Average data, payments and per-agent returns over seeded episodes ``0..episodes-1``."""
    eps = _rollouts(policy, env_config, range(episodes), parallelism, greedy)
    totals = np.array([episode_totals(ep.transitions, cost) for ep in eps])
    returns = np.array([ep.returns for ep in eps])
    return EvalResult(float(totals[:, 0].mean()), float(totals[:, 1].mean()), returns.mean(axis=0))


@dataclass
class OracleResult:
    best_total: float
    best_sequence: list[tuple[int, ...]]
    per_agent_at_best: np.ndarray
    per_agent_best: np.ndarray


def brute_force_oracle(env_config: EnvConfig, discount: float = 1.0) -> OracleResult:
    """Exhaustive search over joint action sequences of a tiny deterministic instance.

    Returns the sequence maximising the summed (discounted) return, that
    sequence's per-agent returns, and separately each agent's own best.
    """
    if env_config.worker_count > 3 or env_config.max_steps > 4:
        raise OracleTooLargeError("oracle limited to <= 3 workers and <= 4 steps")
    if env_config.std != 0:
        raise OracleTooLargeError("oracle needs deterministic contributions (std = 0)")
    w = env_config.worker_count
    joint = list(itertools.product((0, 1), repeat=w))
    env = WorkerEnv(env_config)
    leaves = []

    def dfs(state, seq, acc, scale):
        if state.done:
            leaves.append((float(acc.sum()), list(seq), acc.copy()))
            return
        for a in joint:
            env.state = state.copy()
            tr = env.step(a)
            dfs(tr.next_state, seq + [a], acc + scale * tr.rewards, scale * discount)

    dfs(env.reset(0), [], np.zeros(w), 1.0)
    best = max(leaves, key=lambda leaf: leaf[0])
    per_agent_best = np.max(np.array([leaf[2] for leaf in leaves]), axis=0)
    return OracleResult(best[0], best[1], best[2], per_agent_best)


def save_policy(path, policy: Policy, header: str = "") -> None:
    """Text policy file; see README for the format."""
    a, h, d = policy.actor.shape
    lines = [f"# {POLICY_FORMAT}"]
    if header:
        lines.append(f"# {header}")
    lines.append(f"agents {policy.n_agents} inputs {d} hidden {h} shared {int(policy.actor.shared)} "
                 f"version {policy.version}")
    for k in PARAM_NAMES:
        vals = policy.actor.params[k].ravel()
        lines.append(f"{k} {vals.size} " + " ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path) -> Policy:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {POLICY_FORMAT}":
        raise ValueError(f"{path}: not a {POLICY_FORMAT} file")
    body = [ln for ln in lines if not ln.startswith("#")]
    meta = body[0].split()
    fields_ = dict(zip(meta[0::2], (int(v) for v in meta[1::2])))
    n_agents, d, h = fields_["agents"], fields_["inputs"], fields_["hidden"]
    a = 1 if fields_["shared"] else n_agents
    shapes = {"W1": (a, h, d), "b1": (a, h), "w2": (a, h), "b2": (a,)}
    params = {}
    for ln in body[1:]:
        name, count, *vals = ln.split()
        if name not in shapes or int(count) != len(vals) or len(vals) != math.prod(shapes[name]):
            raise ValueError(f"{path}: malformed parameter line {name!r}")
        params[name] = np.array([float(v) for v in vals]).reshape(shapes[name])
    if set(params) != set(PARAM_NAMES):
        raise ValueError(f"{path}: missing parameters {set(PARAM_NAMES) - set(params)}")
    return Policy(AgentMlp(params, n_agents), version=fields_["version"])
