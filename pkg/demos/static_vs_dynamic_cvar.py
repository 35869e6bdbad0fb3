"""
Static and dynamic CVaR on a two-step coin chain
================================================

Two fair A/B flips; the final flip pays AA=4, AB=2, BA=2, BB=0.
Static CVaR looks at the worst half of the *total* cost, dynamic CVaR
takes the worst half at every step and compounds.
"""

import numpy as np

from riskplan import (
    build,
    cvar,
    cvar_dual_weights,
    mean_variance,
    return_distribution,
    solve_dynamic_cvar,
    solve_static_cvar,
    var,
)
from riskplan.mdp import Policy

chain = build("fig22-chain")

# %%
# The chain has one action, so there is exactly one return distribution.
dist = return_distribution(chain, Policy.uniform(chain.num_states, 1))
print("return distribution:", dist.atoms())
print("mean               :", dist.mean)

# %%
# Risk measures of that distribution at alpha = 0.5
for alpha in (1.0, 0.5, 0.25):
    print(f"alpha={alpha:<5} VaR={var(dist, alpha):<4} CVaR={cvar(dist, alpha)}")
print("mean + variance    :", mean_variance(dist, 1.0))

# %%
# CVaR is also the largest reweighted mean over densities bounded by 1/alpha;
# the maximiser puts all its weight on the worst half.
w = cvar_dual_weights(dist, 0.5)
print("dual weights       :", w.delta, "->", w.reweighted_mean(dist))

# %%
# Planning: the budget-augmented game recovers the static value,
# the nested recursion the dynamic one.
_, static_policy = solve_static_cvar(chain, 0.5)
v_dyn, _ = solve_dynamic_cvar(chain, 0.5)
print("static CVaR_0.5    :", round(static_policy.value(), 12))
print("dynamic CVaR_0.5   :", v_dyn[chain.initial_state])

# %%
# The augmented value table, row = state, column = budget y.
# Smaller budgets mean a more concentrated adversary and higher cost.
ys = static_policy.grid.points
pick = [int(np.argmin(np.abs(ys - y))) for y in (0.25, 0.5, 1.0)]
print("\n      y=0.25  y=0.5  y=1")
for s in range(3):
    print(f"s={s}  ", "  ".join(f"{static_policy.values[0, s, k]:5.2f}" for k in pick))
