"""Experiment configuration: a JSON document mapped onto dataclasses.

Unknown keys anywhere in the document are errors. See README for the schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .env import EnvConfig
from .marl import TrainConfig
from .model import DomainError, LmoProfile, SystemParams

SCHEMES = ("asosa", "fixed", "random", "equilibrium-only")
SWEEP_PARAMETERS = ("tau", "price", "total_data")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LmoSpec:
    price: float
    fixed_cost: float = 0.0
    worker_count: Optional[int] = None


@dataclass(frozen=True)
class LmoGenerator:
    count: int
    price: float = 1.0
    fixed_cost: float = 4.0
    workers_min: int = 5
    workers_max: int = 20


@dataclass(frozen=True)
class EnvTemplate:
    budget: float = 10.0
    payout_rate: float = 0.1
    contribution_mean: Optional[float] = None
    contribution_std: Optional[float] = None
    capacity: float = 1.0
    max_steps: int = 20


@dataclass(frozen=True)
class StubSpec:
    """Linear worker response: ``rate_per_worker * W_m`` data per unit budget."""

    rate_per_worker: float = 0.1
    capacity_per_worker: Optional[float] = None


@dataclass(frozen=True)
class ObsaSpec:
    tolerance: Optional[float] = None
    relative_tolerance: float = 0.05
    episodes: int = 16
    max_bisections: int = 40
    cost: str = "disbursed"


@dataclass(frozen=True)
class AsosaSpec:
    max_iterations: int = 50
    conv_tolerance: Optional[float] = None
    retrain: bool = False


@dataclass(frozen=True)
class CompareSpec:
    M: list[int] = field(default_factory=lambda: [4, 6, 8])
    fixed_price: float = 10.0
    random_hi: float = 10.0
    random_draws: int = 20


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int = 100
    lmo: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "default"
    params: SystemParams = field(default_factory=SystemParams)
    lmos: Optional[list[LmoSpec]] = None
    lmo_generator: Optional[LmoGenerator] = None
    env: EnvTemplate = field(default_factory=EnvTemplate)
    train: TrainConfig = field(default_factory=TrainConfig)
    scheme: str = "asosa"
    policy_source: str = "stub"
    stub: StubSpec = field(default_factory=StubSpec)
    policies_dir: Optional[str] = None
    obsa: ObsaSpec = field(default_factory=ObsaSpec)
    asosa: AsosaSpec = field(default_factory=AsosaSpec)
    compare: CompareSpec = field(default_factory=CompareSpec)
    sweeps: list[SweepSpec] = field(default_factory=list)
    svg: bool = False
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.policy_source not in ("stub", "trained"):
            raise ConfigError("policy_source must be 'stub' or 'trained'")
        if (self.lmos is None) == (self.lmo_generator is None):
            raise ConfigError("give exactly one of 'lmos' or 'lmo_generator'")
        if self.obsa.cost not in ("disbursed", "rewards"):
            raise ConfigError("obsa.cost must be 'disbursed' or 'rewards'")
        for sw in self.sweeps:
            if sw.parameter not in SWEEP_PARAMETERS:
                raise ConfigError(f"unknown sweep parameter {sw.parameter!r}; "
                                  f"expected one of {SWEEP_PARAMETERS}")
            if sw.parameter == "price" and sw.lmo is None:
                raise ConfigError("price sweep needs 'lmo'")
            if sw.steps < 2:
                raise ConfigError("sweep steps must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def profiles(self, count: Optional[int] = None) -> list[LmoProfile]:
        """LMO profiles; worker counts not fixed in the config come from the master seed.

        With an explicit ``lmos`` list, ``count`` keeps the first ``count``
        entries and appends generated LMOs on the first entry's terms if the
        list is too short.
        """
        rng = np.random.default_rng(derive_seed(self.seed, 1))
        if self.lmos is not None:
            n = len(self.lmos) if count is None else count
            specs = list(self.lmos[:n])
            first = self.lmos[0]
            specs += [LmoSpec(first.price, first.fixed_cost)] * (n - len(specs))
            out = []
            for i, spec in enumerate(specs, start=1):
                w = spec.worker_count if spec.worker_count is not None else int(rng.integers(5, 21))
                out.append(LmoProfile(i, spec.price, spec.fixed_cost, w))
            return out
        gen = self.lmo_generator
        n = gen.count if count is None else count
        ws = rng.integers(gen.workers_min, gen.workers_max + 1, size=n)
        return [LmoProfile(i + 1, gen.price, gen.fixed_cost, int(w)) for i, w in enumerate(ws)]

    def env_config(self, worker_count: int, budget: Optional[float] = None) -> EnvConfig:
        e = self.env
        return EnvConfig(worker_count=worker_count, budget=budget if budget is not None else e.budget,
                         payout_rate=e.payout_rate, contribution_mean=e.contribution_mean,
                         contribution_std=e.contribution_std, capacity=e.capacity,
                         max_steps=e.max_steps, seed=derive_seed(self.seed, 3), params=self.params)

    def train_config(self, lmo_id: int) -> TrainConfig:
        return dataclasses.replace(self.train, seed=derive_seed(self.seed, 2, lmo_id))

    def obsa_options(self) -> dict:
        return {"tolerance": self.obsa.tolerance or self.params.obsa_tolerance,
                "relative_tolerance": self.obsa.relative_tolerance,
                "max_bisections": self.obsa.max_bisections}

    def digest(self) -> str:
        """Hash of everything that affects results (the output directory excluded)."""
        d = to_dict(self)
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def header(self) -> str:
        return f"config_sha256={self.digest()} seed={self.seed}"


def derive_seed(master: int, *keys: int) -> int:
    state = np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def _strip_optional(tp):
    args = typing.get_args(tp)
    if typing.get_origin(tp) is typing.Union and type(None) in args:
        return [a for a in args if a is not type(None)][0], True
    return tp, False


def _build(tp, value, where: str):
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}: null not allowed")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp) if f.init}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        kwargs = {k: _build(hints[k], v, f"{where}.{k}") for k, v in value.items()}
        try:
            return tp(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        (item,) = typing.get_args(tp)
        return [_build(item, v, f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported type {tp}")


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return _build(ExperimentConfig, data, "config")
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)
