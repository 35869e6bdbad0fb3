"""Expected-cost dynamic programming on tabular MDPs.

Finite-horizon problems are solved by backward induction and return
stage-dependent policies; unbounded discounted problems are solved by
successive approximation and return stationary ones.
"""
from __future__ import annotations

import numpy as np

from .mdp import Mdp, Policy, check_policy

TIE_TOL = 1e-12
MAX_SWEEPS = 1_000_000


def greedy(q: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Lowest-index minimiser along the last axis, with a small tie band."""
    best = q.min(axis=-1, keepdims=True)
    band = tol * np.maximum(1.0, np.abs(best))
    return np.argmax(q <= best + band, axis=-1)


def q_values(mdp: Mdp, v_next: np.ndarray) -> np.ndarray:
    """One-step lookahead ``Q[s, a] = sum_s' P (C + gamma V(s'))``."""
    return mdp.expected_costs() + mdp.gamma * (mdp.P @ v_next)


def value_iteration(mdp: Mdp, tol: float = 1e-10) -> tuple[np.ndarray, Policy]:
    """Optimal expected cost from each state and a greedy policy.

    For a finite horizon the values are those at stage 0 and the policy is
    stage-indexed. For an unbounded horizon iteration stops once the
    Bellman residual of the returned values is at most ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    S, A = mdp.num_states, mdp.num_actions
    if mdp.horizon is not None:
        v = np.zeros(S)
        actions = np.zeros((mdp.horizon, S), dtype=int)
        for t in reversed(range(mdp.horizon)):
            q = q_values(mdp, v)
            actions[t] = greedy(q)
            v = q.min(axis=1)
        return v, Policy(np.eye(A)[actions])

    v = np.zeros(S)
    for _ in range(MAX_SWEEPS):
        v_new = q_values(mdp, v).min(axis=1)
        # residual of v_new is at most gamma * |v_new - v|
        done = mdp.gamma * np.max(np.abs(v_new - v)) <= tol
        v = v_new
        if done:
            break
    else:  # pragma: no cover - unreachable for valid gamma < 1
        raise RuntimeError("value iteration did not converge")
    return v, Policy.deterministic(greedy(q_values(mdp, v)), A)


def bellman_residual(mdp: Mdp, v: np.ndarray) -> float:
    return float(np.max(np.abs(q_values(mdp, v).min(axis=1) - v)))


def policy_evaluation(mdp: Mdp, policy: Policy, tol: float = 1e-10) -> np.ndarray:
    """Expected cost of following ``policy`` from each state.

    The unbounded case is solved as a linear system, so the residual is at
    round-off level regardless of ``tol``.
    """
    check_policy(mdp, policy)
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = mdp.expected_costs()
    if mdp.horizon is not None:
        v = np.zeros(mdp.num_states)
        for t in reversed(range(mdp.horizon)):
            pi = policy.at(t)
            v = np.sum(pi * (c + mdp.gamma * (mdp.P @ v)), axis=1)
        return v
    if not policy.is_stationary:
        raise ValueError("an unbounded horizon needs a stationary policy")
    pi = policy.probs
    P_pi = np.einsum("sa,sap->sp", pi, mdp.P)
    c_pi = np.sum(pi * c, axis=1)
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * P_pi, c_pi)


def worst_case_table(mdp: Mdp) -> np.ndarray:
    """Minimax cost-to-go over transition supports, shape (H + 1, S).

    Row ``t`` holds ``min_a max_{s': P > 0} [C + gamma W[t + 1](s')]``; the
    final row is zero.
    """
    if mdp.horizon is None:
        raise ValueError("worst-case cost needs a finite horizon")
    S = mdp.num_states
    W = np.zeros((mdp.horizon + 1, S))
    support = mdp.P > 0
    for t in reversed(range(mdp.horizon)):
        outcome = np.where(support, mdp.C + mdp.gamma * W[t + 1][None, None, :], -np.inf)
        W[t] = outcome.max(axis=2).min(axis=1)
    return W


def worst_case_cost(mdp: Mdp, start: int | None = None) -> float:
    """Smallest cost that some policy is guaranteed never to exceed."""
    s = mdp.initial_state if start is None else start
    return float(worst_case_table(mdp)[0, s])


def worst_case_policy(mdp: Mdp) -> Policy:
    W = worst_case_table(mdp)
    support = mdp.P > 0
    actions = np.zeros((mdp.horizon, mdp.num_states), dtype=int)
    for t in range(mdp.horizon):
        outcome = np.where(support, mdp.C + mdp.gamma * W[t + 1][None, None, :], -np.inf)
        actions[t] = greedy(outcome.max(axis=2))
    return Policy(np.eye(mdp.num_actions)[actions])
