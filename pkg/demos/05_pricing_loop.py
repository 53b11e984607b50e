"""
The adaptive pricing loop and its baselines
===========================================

Owners report unit prices, the publisher sets tau, owners with a negative
equilibrium strategy leave, the rest search their budgets, and each price is
reset to what was actually paid per unit of data. The loop stops when
strategies stop moving. Fixed and random pricing are single rounds of the
same procedure.
"""

import numpy as np

from fedincentive import LinearResponse, LmoProfile, SystemParams, asosa, run_fixed_pricing, run_random_pricing

# %% Elimination: the owner charging 1.0 against three at 0.2 quits in round one
params = SystemParams(lam=1.0, alpha=10.0, beta=1.0)
profiles = [LmoProfile(i + 1, p) for i, p in enumerate([0.2, 0.2, 0.2, 1.0])]
trace = asosa(profiles, {i: LinearResponse(5.0) for i in range(1, 5)}, params)
print("eliminated in iteration 1:", trace.rounds[0].eliminated)
print(f"termination: {trace.termination} after {trace.iterations} iteration(s)")
for r in trace.records:
    print(f"  it {r.iteration} LMO {r.lmo}: price {r.price:.3f} zeta {r.zeta_theory:.3f} status {r.status}")

# %% Prices converge to realised unit costs
params = SystemParams(lam=1.0, alpha=100.0, beta=1.0)
workers = [6, 8, 16, 20]
profiles = [LmoProfile(i + 1, 1.0, 4.0, w) for i, w in enumerate(workers)]
responses = {p.id: LinearResponse(0.1 * p.worker_count) for p in profiles}
trace = asosa(profiles, responses, params)
last = trace.last_ok
print(f"ASOSA: {trace.termination}, active {last.active}, TP utility {last.tp_utility:.1f}, "
      f"data {last.total_data:.1f}")

# %% Baselines on the same owners
fixed = run_fixed_pricing(profiles, 10.0, params, responses)
draws = [run_random_pricing(profiles, 10.0, seed, params, responses) for seed in range(20)]
print(f"fixed price 10: TP utility {fixed.tp_utility:.1f}, data {fixed.total_data:.1f}")
print(f"random (0,10), mean of 20: TP utility {np.mean([d.tp_utility for d in draws]):.1f}, "
      f"data {np.mean([d.total_data for d in draws]):.1f}")
