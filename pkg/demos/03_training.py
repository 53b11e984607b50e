"""
Training workers with the clipped surrogate objective
=====================================================

Every worker owns a small network mapping the shared observation (all
fatigue levels and the remaining budget ratio) to its participation
probability. On tiny deterministic instances an exhaustive oracle tells us
how good the learned behaviour is.
"""

import numpy as np

from fedincentive import EnvConfig, TrainConfig, brute_force_oracle, evaluate, train

# %% A tiny instance the oracle can enumerate: 2 workers, 3 steps, no noise
tiny = EnvConfig(worker_count=2, budget=4.0, payout_rate=0.5, contribution_mean=0.25,
                 contribution_std=0.0, max_steps=3)
oracle = brute_force_oracle(tiny)
print("oracle best total", round(oracle.best_total, 4), "sequence", oracle.best_sequence)

res = train(tiny, TrainConfig(iterations=150, learning_rate=1e-2, discount=1.0, seed=0))
got = evaluate(res.policy, tiny, 1, greedy=True).mean_returns.sum()
print(f"trained greedy return {got:.4f} ({got / oracle.best_total:.1%} of the oracle)")

# %% A 20-worker run: the mean return curve climbs
cfg = EnvConfig(worker_count=20, budget=20.0, seed=0)
log = train(cfg, TrainConfig(iterations=60, learning_rate=3e-3, seed=0)).log
r = np.array([row["mean_return"] for row in log])
smooth = np.convolve(r, np.ones(10) / 10, mode="valid")
for i in range(0, len(smooth), 10):
    print(f"iteration {i + 9:3d}  smoothed mean return {smooth[i]:.4f}")
