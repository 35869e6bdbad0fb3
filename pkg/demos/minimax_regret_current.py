"""
Minimax regret with an unknown current
======================================

A corridor crosses a current that either pushes left or right. Steering
with the current is free, against it costs 2, and drifting costs 1 but
reveals the direction. We don't know which world we are in.
"""

import numpy as np

from riskplan import build, evaluate_regret, robust_value_iteration
from riskplan.uncertain import (
    exact_minimax_regret,
    solve_minimax_regret_approx,
    solve_minimax_regret_options,
)

# %%
# Warm-up: a two-world bandit. Arm 0 is free in world 1 and costs 3 in
# world 2; arm 1 costs 2 or 1. Each pure arm regrets 2 somewhere.
bandit = build("regret-bandit")
for stochastic in (False, True):
    w, pol = solve_minimax_regret_approx(bandit, stochastic=stochastic)
    print(f"stochastic={stochastic!s:<5} value {w[0]:.3f} policy {np.round(pol.at(0)[0], 3)}")
print("exact over a 0.01 grid of mixtures:", exact_minimax_regret(bandit, "grid-stochastic", 0.01)[0])

# %%
# The corridor. A robust planner assumes the worst at every step.
field = build("current-field")
s0 = field.ref.initial_state
w_rob, rob = robust_value_iteration(field)
print("\nrobust worst-case cost:", w_rob[s0], " regret per world:", evaluate_regret(field, rob)[0])

# %%
# Per-step regret planning lets the world change between steps, so it
# can't exploit what a drift reveals. Options fix the world for n steps.
for n in (1, 2, 3, 4):
    w, options = solve_minimax_regret_options(field, n)
    per_world, worst = evaluate_regret(field, options)
    print(f"options n={n}: bound {w[s0]:.2f}  true regret per world {per_world}  max {worst:.2f}")
