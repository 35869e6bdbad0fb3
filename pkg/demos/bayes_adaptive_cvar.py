"""
Risk-averse planning when the dynamics are learned
==================================================

Arm 1 costs 1 for sure. Arm 2 costs 0 or 2, with odds we only know
through Dirichlet pseudo-counts. A risk-neutral agent is indifferent at
counts (1, 1); a CVaR agent is not.
"""

from riskplan import build, exact_bamdp_cvar, predictive_transition
from riskplan.mcts import MctsConfig, solve_bamdp_cvar_mcts

problem = build("two-arm-bamdp")
print("predictive odds of arm 2:", predictive_transition(problem.prior, 0, 1)[2:])

for alpha in (1.0, 0.5):
    exact = exact_bamdp_cvar(problem, alpha)
    est = solve_bamdp_cvar_mcts(problem, alpha, config=MctsConfig(iterations=20_000, seed=0))
    print(f"alpha={alpha}: exact {exact.value:.3f} (best first arm(s) {exact.tied_actions}), "
          f"MCTS {est.estimate:.3f} picks arm {est.action}; per-arm {est.action_estimates}")

# Two pulls: the first outcome updates the belief about arm 2
two = build("two-arm-bamdp", pulls=2)
for alpha in (1.0, 0.5, 0.25):
    print(f"two pulls, alpha={alpha}: exact CVaR {exact_bamdp_cvar(two, alpha).value:.4f}")

# More favourable evidence for arm 2 flips the risk-neutral choice
lucky = build("two-arm-bamdp", counts=(3, 1))
print("counts (3, 1), alpha=1  :", exact_bamdp_cvar(lucky, 1.0).value)
print("counts (3, 1), alpha=0.3:", exact_bamdp_cvar(lucky, 0.3).value)
