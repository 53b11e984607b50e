"""
Workers sharing an owner's budget
=================================

Each step every worker participates or abstains. Participants split a payout
pool (a fraction of the remaining budget) by data share, get a base reward
that grows as the budget drains, and pay fatigue. Randomness is counter
based, so episode ``e`` is the same no matter when or where it is run.
"""

import tempfile
from pathlib import Path

import numpy as np

from fedincentive import ConstantPolicy, EnvConfig, WorkerEnv, evaluate
from fedincentive.env import episode_totals, write_episode_trace

cfg = EnvConfig(worker_count=4, budget=10.0, payout_rate=0.1, max_steps=20, seed=1)
env = WorkerEnv(cfg)

# %% One episode where workers 0 and 1 always join and 2, 3 always abstain
state = env.reset(episode=0)
transitions = []
while not state.done:
    tr = env.step([1, 1, 0, 0])
    transitions.append(tr)
    state = tr.next_state
data, paid = episode_totals(transitions)
print(f"{len(transitions)} steps, data {data:.4f}, paid {paid:.4f}, left {state.remaining:.4f}")
print("returns", np.sum([t.rewards for t in transitions], axis=0))

# %% Budget conservation holds step by step
print("remaining + paid == budget:", np.isclose(state.remaining + paid, cfg.budget))

# %% Same episode index, same draws
again = WorkerEnv(cfg)
again.reset(episode=0)
print("replayed first step identical:",
      np.array_equal(again.step([1, 1, 0, 0]).contributions, transitions[0].contributions))

# %% Stub policies: always participate vs never
for prob in (1.0, 0.0):
    res = evaluate(ConstantPolicy(4, prob), cfg, episodes=8)
    print(f"participate w.p. {prob}: data {res.mean_total_data:.4f}, paid {res.mean_total_paid:.4f}, "
          f"returns {np.round(res.mean_returns, 4)}")

# %% Per-step trace as CSV
out = Path(tempfile.mkdtemp()) / "episode_trace.csv"
write_episode_trace(out, [transitions], header="demo seed=1")
print(out.read_text().splitlines()[:4])
