"""Hierarchical incentive mechanism for federated learning: a Stackelberg game
between a task publisher and local model owners, multi-agent worker training,
budget search and the adaptive pricing loop that couples them."""

from .asosa import AsosaTrace, asosa, run_fixed_pricing, run_random_pricing
from .env import EnvConfig, WorkerEnv
from .marl import ConstantPolicy, Policy, TrainConfig, brute_force_oracle, evaluate, load_policy, save_policy, train
from .model import DomainError, LmoProfile, SystemParams
from .obsa import LinearResponse, PolicyResponse, obsa
from .stackelberg import solve_equilibrium, verify_first_order

__all__ = [
    "AsosaTrace", "ConstantPolicy", "DomainError", "EnvConfig", "LinearResponse", "LmoProfile", "Policy",
    "PolicyResponse", "SystemParams", "TrainConfig", "WorkerEnv", "asosa", "brute_force_oracle", "evaluate",
    "load_policy", "obsa", "run_fixed_pricing", "run_random_pricing", "save_policy", "solve_equilibrium",
    "train", "verify_first_order",
]
