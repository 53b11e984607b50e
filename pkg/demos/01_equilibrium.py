"""
Stackelberg equilibrium between a task publisher and model owners
=================================================================

The publisher (TP) posts a budget tau; each local model owner (LMO) picks how
much data to contribute and is paid its data share of tau. Backward
induction gives everything in closed form.
"""

import numpy as np

from fedincentive import LmoProfile, SystemParams, solve_equilibrium, verify_first_order
from fedincentive.stackelberg import nash_deviation_gain, tp_utility_of_tau

# %% Two identical owners at unit price 1 with lam*alpha = 10, beta = 1
params = SystemParams(lam=1.0, alpha=10.0, beta=1.0)
profiles = [LmoProfile(1, 1.0), LmoProfile(2, 1.0)]
sol = solve_equilibrium(profiles, params)
print(f"tau* = {sol.tau_star}, total data Z* = {sol.z_star}")
print("contributions", sol.zetas, "budgets", sol.budgets)

# %% The closed form really is an equilibrium: utilities are flat at the optimum
report = verify_first_order(sol, profiles, params)
print(f"largest first-order residual {report.max_deviation:.2e}")
print("best unilateral gain per owner", nash_deviation_gain(sol, profiles))

# %% The publisher's utility is single-peaked in tau
prices = [p.price for p in profiles]
grid = np.linspace(0.1, 9.9, 99)
u = [tp_utility_of_tau(t, prices, params) for t in grid]
print(f"grid argmax tau = {grid[int(np.argmax(u))]:.2f} (closed form {sol.tau_star})")

# %% An owner that raises its price contributes less, earns less, and hurts the publisher
print(" P1     zeta1    U1       tau*     U_TP")
for p1 in np.linspace(0.05, 0.29, 7):
    prof = [LmoProfile(1, p1, 4.0)] + [LmoProfile(i, 0.2, 4.0) for i in (2, 3, 4)]
    s = solve_equilibrium(prof, params)
    print(f"{p1:.3f}  {s.zetas[0]:7.3f}  {s.per_lmo[0].predicted_utility:7.3f}  {s.tau_star:7.4f}  "
          f"{tp_utility_of_tau(s.tau_star, [p.price for p in prof], params):7.3f}")

# %% Too expensive an owner would need to contribute negative data: it leaves the game
prof = [LmoProfile(i + 1, p) for i, p in enumerate([0.2, 0.2, 0.2, 1.0])]
s = solve_equilibrium(prof, params)
print("feasible flags", [e.feasible for e in s.per_lmo], "zeta of owner 4", s.zetas[3])
