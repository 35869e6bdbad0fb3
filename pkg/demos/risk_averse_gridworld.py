"""
Risk-averse navigation on a slippery grid
=========================================

A 4x3 grid with a row of pits next to the start. Walking along the pits is
short but a slip costs 10; going round is longer and safe.
"""

import numpy as np

from riskplan import build, cvar, return_distribution, solve_static_cvar, value_iteration, worst_case_cost
from riskplan.cvar_planning import augmented_return_distribution

grid = build("grid-nav", w=4, h=3, slip=0.1, pit_cost=10.0, horizon=8)
NAMES = "^v<>"


def show(actions, w=4, h=3):
    for y in reversed(range(h)):
        row = []
        for x in range(w):
            s = y * w + x
            if s in grid.terminals:
                row.append("G" if s == w * h - 1 else "o")
            else:
                row.append(NAMES[actions[s]])
        print("   ", " ".join(row))


# expected cost first
v, ev_policy = value_iteration(grid)
ev_dist = return_distribution(grid, ev_policy)
print("expected-cost policy (o = pit):")
show(ev_policy.greedy_actions(0))
print(f"  mean {ev_dist.mean:.3f}  CVaR_0.1 {cvar(ev_dist, 0.1):.3f}  P(cost>=10) {ev_dist.probs[ev_dist.values >= 10].sum():.3f}")

# static CVaR at a few levels; the first action shows the change of route
for alpha in (0.5, 0.1, 0.02):
    _, pol = solve_static_cvar(grid, alpha)
    d = augmented_return_distribution(pol)
    first = NAMES[pol.act(0, grid.initial_state, alpha)[0]]
    print(f"alpha={alpha:<5} first move {first}  mean {d.mean:.3f}  CVaR {cvar(d, alpha):.3f} "
          f"(table {pol.value():.3f})  P(pit) {d.probs[d.values >= 10].sum():.3f}")

print("worst case over all policies:", worst_case_cost(grid))
print("cost atoms of the expected-cost policy:", np.round(ev_dist.values, 3))
