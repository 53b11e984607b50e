"""
Finding the budget that buys the equilibrium data
=================================================

Workers rarely deliver exactly the contribution the game asks for. The owner
bisects its actual budget on [0, tau] until realised data is within the
tolerance of the target.
"""

from fedincentive import EnvConfig, LinearResponse, PolicyResponse, TrainConfig, obsa, train
from fedincentive.obsa import probe_monotonicity

# %% Linear stub: data = c * budget, so the answer is zeta / c
res = obsa(tau=16.0, zeta_target=5.0, response=LinearResponse(1.0), tolerance=0.01)
print(f"B* = {res.budget_star:.5f} after {res.iterations} bisections, converged={res.converged}")
for k, mid, data, paid in res.trace[:5]:
    print(f"  step {k}: budget {mid:.4f} -> data {data:.4f}")

# %% Targets beyond worker capacity are refused up front
print(obsa(10.0, 5.0, LinearResponse(1.0, capacity=2.0)).diagnostic)

# %% Trained workers: average seeded episodes at every probed budget
env = EnvConfig(worker_count=6, budget=10.0, capacity=5.0, seed=3)
policy = train(env, TrainConfig(iterations=20, learning_rate=3e-3, seed=1)).policy
response = PolicyResponse(policy, env, episodes=4)
probe_monotonicity(response, 16.0)
res = obsa(16.0, 10.0, response, max_bisections=12)
print(f"trained: B* = {res.budget_star:.4f}, data {res.total_data:.4f}, converged={res.converged} "
      f"{res.diagnostic}")
