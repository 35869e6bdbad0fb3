"""Risk-sensitive and robust planning for tabular MDPs (cost convention: lower is better)."""
from .bamdp import (
    BamdpProblem,
    BeliefState,
    DirichletBelief,
    belief_update,
    exact_bamdp_cvar,
    predictive_transition,
    root_sample,
)
from .coherence import (
    AXIOM_CHECKS,
    check_monotonicity,
    check_positive_homogeneity,
    check_subadditivity,
    check_translation_invariance,
    find_monotonicity_witness,
)
from .cvar_planning import (
    AugmentedPolicy,
    ConstrainedEV,
    InfeasibleBudget,
    LexPolicy,
    YGrid,
    adversary_best_response,
    augmented_return_distribution,
    constrained_ev_dp,
    dynamic_cvar_evaluation,
    lex_return_distribution,
    solve_dynamic_cvar,
    solve_lexicographic,
    solve_static_cvar,
    static_cvar_of_policy,
)
from .distribution import AtomCapExceeded, CostDistribution, return_distribution
from .domains import DomainSpec, build, list_domains
from .matrix_game import GameTooLarge, solve_matrix_game
from .mcts import CvarMcts, MctsConfig, MctsResult, solve_bamdp_cvar_mcts
from .mdp import InvalidMdpError, Mdp, Policy, load_mdp, mdp_from_dict, mdp_from_rows, mdp_to_dict, save_mdp
from .oracles import OracleCapExceeded, OracleResult, exhaustive_lexicographic, exhaustive_static_cvar
from .risk import DualWeights, RiskSpec, cvar, cvar_dual_weights, expectation, mean_variance, var
from .solvers import policy_evaluation, value_iteration, worst_case_cost, worst_case_policy
from .uncertain import (
    OptionPolicy,
    PlanCapExceeded,
    SampleUncertainMdp,
    evaluate_regret,
    exact_minimax_regret,
    regret_cost,
    robust_policy_evaluation,
    robust_value_iteration,
    solve_minimax_regret_approx,
    solve_minimax_regret_options,
)

__version__ = "0.1.0"

__all__ = [
    "AXIOM_CHECKS",
    "AtomCapExceeded",
    "AugmentedPolicy",
    "BamdpProblem",
    "BeliefState",
    "ConstrainedEV",
    "CostDistribution",
    "CvarMcts",
    "DirichletBelief",
    "DomainSpec",
    "DualWeights",
    "GameTooLarge",
    "InfeasibleBudget",
    "InvalidMdpError",
    "LexPolicy",
    "MctsConfig",
    "MctsResult",
    "Mdp",
    "OptionPolicy",
    "OracleCapExceeded",
    "OracleResult",
    "PlanCapExceeded",
    "Policy",
    "RiskSpec",
    "SampleUncertainMdp",
    "YGrid",
    "adversary_best_response",
    "augmented_return_distribution",
    "belief_update",
    "build",
    "check_monotonicity",
    "check_positive_homogeneity",
    "check_subadditivity",
    "check_translation_invariance",
    "constrained_ev_dp",
    "cvar",
    "cvar_dual_weights",
    "dynamic_cvar_evaluation",
    "evaluate_regret",
    "exact_bamdp_cvar",
    "exact_minimax_regret",
    "exhaustive_lexicographic",
    "exhaustive_static_cvar",
    "expectation",
    "find_monotonicity_witness",
    "lex_return_distribution",
    "list_domains",
    "load_mdp",
    "mdp_from_dict",
    "mdp_from_rows",
    "mdp_to_dict",
    "mean_variance",
    "policy_evaluation",
    "predictive_transition",
    "regret_cost",
    "return_distribution",
    "robust_policy_evaluation",
    "robust_value_iteration",
    "root_sample",
    "save_mdp",
    "solve_bamdp_cvar_mcts",
    "solve_dynamic_cvar",
    "solve_lexicographic",
    "solve_matrix_game",
    "solve_minimax_regret_approx",
    "solve_minimax_regret_options",
    "solve_static_cvar",
    "static_cvar_of_policy",
    "value_iteration",
    "var",
    "worst_case_cost",
    "worst_case_policy",
]
