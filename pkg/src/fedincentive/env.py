"""Shared-budget worker environment (one LMO, ``W`` workers).

Each step every worker chooses to participate (1) or abstain (0).
Participants draw a data contribution, split a payout pool of
``payout_rate * remaining_budget`` in proportion to their data, collect a
base reward that grows as the budget is spent, and pay their current
fatigue. Abstainers receive the penalty ``phi``.

Randomness is counter-based: the draw of worker ``i`` at step ``t`` of
episode ``e`` depends only on ``(seed, e, t, i)``, so episodes can be run in
any order or in parallel without changing a single sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import DomainError, SystemParams, fatigue_array

# Philox counter word 3 separates independent streams within one step.
CONTRIBUTION_STREAM = 0
ACTION_STREAM = 1

TRACE_COLUMNS = ("episode", "step", "worker", "action", "contribution", "reward",
                 "remaining_ratio", "fatigue")


class ContractError(RuntimeError):
    """The environment was driven outside its protocol."""


def episode_key(seed: int, episode: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(episode)]).generate_state(
        2, dtype=np.uint64)


def counter_rng(key: np.ndarray, step: int, stream: int) -> np.random.Generator:
    """Generator positioned at block ``(step, stream)`` of an episode's key."""
    return np.random.Generator(np.random.Philox(counter=[0, 0, int(step), int(stream)], key=key))


@dataclass(frozen=True)
class EnvConfig:
    worker_count: int
    budget: float
    payout_rate: float = 0.1
    contribution_mean: Optional[float] = None
    contribution_std: Optional[float] = None
    capacity: float = 1.0
    max_steps: int = 20
    seed: int = 0
    params: SystemParams = field(default_factory=SystemParams)

    def __post_init__(self):
        if int(self.worker_count) != self.worker_count or self.worker_count < 1:
            raise DomainError("worker_count must be an integer >= 1")
        if not self.budget > 0:
            raise DomainError(f"budget must be > 0, got {self.budget}")
        if not 0 < self.payout_rate <= 1:
            raise DomainError(f"payout_rate must lie in (0, 1], got {self.payout_rate}")
        if not self.capacity > 0:
            raise DomainError("capacity must be > 0")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise DomainError("max_steps must be an integer >= 1")
        if self.contribution_std is not None and self.contribution_std < 0:
            raise DomainError("contribution_std must be >= 0")

    @property
    def mean(self) -> float:
        if self.contribution_mean is None:
            return 0.5 * self.capacity / self.max_steps
        return self.contribution_mean

    @property
    def std(self) -> float:
        if self.contribution_std is None:
            return 0.25 * self.mean
        return self.contribution_std

    @property
    def obs_dim(self) -> int:
        return self.worker_count + 1

    def with_budget(self, budget: float) -> "EnvConfig":
        return replace(self, budget=budget)


@dataclass
class EnvState:
    fatigue: np.ndarray
    remaining: float
    budget: float
    cumulative_data: np.ndarray
    step: int = 0
    done: bool = False

    @property
    def remaining_ratio(self) -> float:
        return self.remaining / self.budget

    def observation(self) -> np.ndarray:
        """Fatigue of every worker followed by the remaining-budget ratio."""
        return np.append(self.fatigue, self.remaining_ratio)

    def copy(self) -> "EnvState":
        return EnvState(self.fatigue.copy(), self.remaining, self.budget,
                        self.cumulative_data.copy(), self.step, self.done)


@dataclass
class Transition:
    actions: np.ndarray
    contributions: np.ndarray
    rewards: np.ndarray
    pool: float
    next_state: EnvState
    done: bool


class WorkerEnv:
    """One episode at a time; not thread-safe, but instances share nothing."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.state: Optional[EnvState] = None
        self.episode = 0
        self._key = episode_key(config.seed, 0)

    def reset(self, episode: int = 0) -> EnvState:
        cfg = self.config
        self.episode = int(episode)
        self._key = episode_key(cfg.seed, episode)
        zeros = np.zeros(cfg.worker_count)
        self.state = EnvState(fatigue=fatigue_array(zeros, cfg.params), remaining=float(cfg.budget),
                              budget=float(cfg.budget), cumulative_data=zeros)
        return self.state

    def rng(self, step: int, stream: int) -> np.random.Generator:
        return counter_rng(self._key, step, stream)

    def step(self, actions: Sequence[int]) -> Transition:
        if self.state is None:
            raise ContractError("call reset() before step()")
        s = self.state
        cfg = self.config
        if s.done:
            raise ContractError("episode is done; call reset()")
        a = np.asarray(actions, dtype=int)
        if a.shape != (cfg.worker_count,):
            raise ContractError(f"expected {cfg.worker_count} actions, got shape {a.shape}")
        if np.any((a != 0) & (a != 1)):
            raise ContractError("actions must be 0 or 1")
        part = a == 1

        noise = self.rng(s.step, CONTRIBUTION_STREAM).standard_normal(cfg.worker_count)
        room = np.maximum(cfg.capacity - s.cumulative_data, 0.0)
        d = np.where(part, np.clip(cfg.mean + cfg.std * noise, 0.0, room), 0.0)
        d_sum = d.sum()

        base = cfg.params.theta * (1.0 - s.remaining / s.budget)
        if d_sum > 0:
            pool = cfg.payout_rate * s.remaining
            share = d / d_sum * pool
        else:
            pool = 0.0
            share = np.zeros_like(d)
        rewards = np.where(part, share + base - s.fatigue, cfg.params.phi)

        cumulative = np.minimum(s.cumulative_data + d, cfg.capacity)
        remaining = s.remaining - pool
        step = s.step + 1
        done = bool(remaining <= 0 or step >= cfg.max_steps or np.all(cumulative >= cfg.capacity))
        nxt = EnvState(fatigue=fatigue_array(cumulative, cfg.params), remaining=remaining,
                       budget=s.budget, cumulative_data=cumulative, step=step, done=done)
        self.state = nxt
        return Transition(actions=a, contributions=d, rewards=rewards, pool=pool,
                          next_state=nxt, done=done)


def episode_totals(transitions: Iterable[Transition], cost: str = "disbursed") -> tuple[float, float]:
    """Total data collected and total paid over an episode.

    ``cost="disbursed"`` counts money leaving the LMO's budget (the payout
    pools). ``cost="rewards"`` instead sums every worker reward, base rewards,
    fatigue and penalties included.
    """
    if cost not in ("disbursed", "rewards"):
        raise ValueError(f"unknown cost model {cost!r}")
    total_data = 0.0
    total_paid = 0.0
    for tr in transitions:
        total_data += float(tr.contributions.sum())
        total_paid += tr.pool if cost == "disbursed" else float(tr.rewards.sum())
    return total_data, total_paid


def write_episode_trace(path, episodes: Sequence[Sequence[Transition]], header: str = "") -> None:
    """One CSV row per (episode, step, worker); state columns are post-step."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for e, transitions in enumerate(episodes):
            for t, tr in enumerate(transitions):
                ratio = tr.next_state.remaining_ratio
                for i in range(len(tr.actions)):
                    w.writerow([e, t, i, int(tr.actions[i]), repr(float(tr.contributions[i])),
                                repr(float(tr.rewards[i])), repr(ratio),
                                repr(float(tr.next_state.fatigue[i]))])
