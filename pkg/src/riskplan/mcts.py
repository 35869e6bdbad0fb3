"""Two-player Monte Carlo tree search for static CVaR in a BAMDP.

Agent and adversary alternate. At an agent node the agent picks an action
(UCT, minimising cost). At the following adversary node the adversary picks
multipliers ``delta`` over the predictive successor distribution, subject to
``0 <= delta <= 1/y`` and ``sum(P_hat * delta) = 1``; the successor is then
sampled from ``P_hat * delta`` and the budget becomes ``y * delta(s')``.
The adversary's continuous action space is searched with progressive
widening: a node visited ``N`` times may hold ``ceil(C * N**omega)``
candidate multipliers.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bamdp import BamdpProblem, BeliefState, belief_update, predictive_transition
from .risk import saturate

FEAS_TOL = 1e-6


@dataclass
class MctsConfig:
    iterations: int = 10_000
    widening_c: float = 1.0
    widening_exponent: float = 0.5
    exploration: float = 2.0
    seed: int = 0
    time_limit: float | None = None
    debug: bool = False


@dataclass
class MctsResult:
    estimate: float
    action: int
    action_estimates: dict
    iterations: int
    budget_exhausted: bool
    stats: dict = field(default_factory=dict)


class _DeltaChild:
    __slots__ = ("delta", "q", "visits", "total", "children")

    def __init__(self, delta: np.ndarray, q: np.ndarray):
        self.delta = delta
        self.q = q  # re-weighted successor distribution P_hat * delta
        self.visits = 0
        self.total = 0.0
        self.children: dict[int, _AgentNode] = {}

    @property
    def mean(self) -> float:
        return self.total / self.visits if self.visits else 0.0


class _AdversaryNode:
    __slots__ = ("p_hat", "support", "costs", "y", "visits", "total", "children")

    def __init__(self, p_hat: np.ndarray, costs: np.ndarray, y: float):
        self.p_hat = p_hat
        self.support = np.flatnonzero(p_hat > 0)
        self.costs = costs
        self.y = y
        self.visits = 0
        self.total = 0.0
        self.children: list[_DeltaChild] = []


class _AgentNode:
    __slots__ = ("state", "visits", "total", "actions")

    def __init__(self, state: BeliefState):
        self.state = state
        self.visits = 0
        self.total = 0.0
        self.actions: list[_AdversaryNode] | None = None


def _feasible(delta: np.ndarray, p_hat: np.ndarray, y: float, tol: float = FEAS_TOL) -> bool:
    return bool(
        np.all(delta >= -tol)
        and np.all(delta <= 1.0 / y + tol)
        and abs(float(p_hat @ delta) - 1.0) <= tol
    )


class CvarMcts:
    """Search tree over belief states; one instance per search."""

    def __init__(self, problem: BamdpProblem, config: MctsConfig):
        self.problem = problem
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.adversary_nodes = 0
        self.root: _AgentNode | None = None

    # -- candidate generation -------------------------------------------------
    def _successor_estimates(self, node: _AdversaryNode) -> np.ndarray:
        """Mean cost of each successor across existing delta-children."""
        gamma = self.problem.gamma
        est = node.costs.copy()
        for sp in node.support:
            visits = total = 0.0
            for child in node.children:
                agent = child.children.get(int(sp))
                if agent is not None and agent.visits:
                    visits += agent.visits
                    total += agent.total
            if visits:
                est[sp] += gamma * total / visits
        return est

    def _new_candidate(self, node: _AdversaryNode) -> np.ndarray | None:
        p, y, supp = node.p_hat, node.y, node.support
        if y >= 1.0 - 1e-12 or supp.size == 1:
            return np.ones_like(p) if not node.children else None
        if len(node.children) % 2 == 0:
            cand = saturate(self._successor_estimates(node)[supp], p[supp], y)
        else:
            # random feasible point: Dirichlet mixture of the nominal weights,
            # the greedy response and a random vertex of the feasible polytope
            greedy_d = saturate(self._successor_estimates(node)[supp], p[supp], y)
            vertex = saturate(self.rng.permutation(supp.size).astype(float), p[supp], y)
            w = self.rng.dirichlet(np.ones(3))
            cand = w[0] * np.ones(supp.size) + w[1] * greedy_d + w[2] * vertex
        delta = np.zeros_like(p)
        delta[supp] = cand
        for child in node.children:
            if np.max(np.abs(child.delta - delta)) <= 1e-9:
                return None
        return delta

    def _widen(self, node: _AdversaryNode) -> None:
        cfg = self.config
        limit = math.ceil(cfg.widening_c * max(node.visits, 1) ** cfg.widening_exponent)
        tries = 0
        while len(node.children) < limit and tries < 3:
            tries += 1
            delta = self._new_candidate(node)
            if delta is None:
                continue
            if cfg.debug:
                assert _feasible(delta, node.p_hat, node.y), "infeasible adversary candidate"
            node.children.append(_DeltaChild(delta, node.p_hat * delta))

    # -- tree policy ------------------------------------------------------------
    def _expand_agent(self, node: _AgentNode) -> None:
        st = node.state
        belief = st.belief
        node.actions = []
        for a in range(belief.num_actions):
            p_hat = predictive_transition(belief, st.env_state, a)
            node.actions.append(_AdversaryNode(p_hat, belief.known_cost[st.env_state, a].copy(), st.y))
            self.adversary_nodes += 1

    def _ucb(self, total: float, visits: int, parent: int, sign: float) -> float:
        if visits == 0:
            return math.inf
        return sign * total / visits + self.config.exploration * math.sqrt(math.log(parent) / visits)

    def _is_leaf(self, st: BeliefState) -> bool:
        return st.depth >= self.problem.horizon or st.env_state in self.problem.terminals

    def _rollout(self, st: BeliefState) -> float:
        """Uniform-random agent, identity adversary."""
        gamma = self.problem.gamma
        belief, s, depth = st.belief, st.env_state, st.depth
        total, disc = 0.0, 1.0
        counts = belief.counts.copy()
        cost = belief.known_cost
        while depth < self.problem.horizon and s not in self.problem.terminals:
            a = int(self.rng.integers(counts.shape[1]))
            row = counts[s, a]
            sp = int(self.rng.choice(row.size, p=row / row.sum()))
            total += disc * cost[s, a, sp]
            counts[s, a, sp] += 1.0
            disc *= gamma
            s, depth = sp, depth + 1
        return total

    def _simulate(self, node: _AgentNode) -> float:
        st = node.state
        if self._is_leaf(st):
            node.visits += 1
            return 0.0
        if node.actions is None:
            self._expand_agent(node)
        parent_n = max(node.visits, 1)
        scores = [self._ucb(adv.total, adv.visits, parent_n, -1.0) for adv in node.actions]
        a = int(np.argmax(scores))
        adv = node.actions[a]

        self._widen(adv)
        adv_n = max(adv.visits, 1)
        child_scores = [self._ucb(ch.total, ch.visits, adv_n, 1.0) for ch in adv.children]
        child = adv.children[int(np.argmax(child_scores))]
        if self.config.debug:
            assert _feasible(child.delta, adv.p_hat, adv.y), "infeasible adversary child"

        sp = int(self.rng.choice(child.q.size, p=child.q / child.q.sum()))
        cost = float(adv.costs[sp])
        nxt = child.children.get(sp)
        if nxt is None:
            y_next = min(1.0, st.y * float(child.delta[sp]))
            nst = BeliefState(sp, belief_update(st.belief, st.env_state, a, sp), max(y_next, 1e-300), st.depth + 1)
            nxt = _AgentNode(nst)
            child.children[sp] = nxt
            future = self._rollout(nst)
            nxt.visits += 1
            nxt.total += future
        else:
            future = self._simulate(nxt)
        ret = cost + self.problem.gamma * future

        child.visits += 1
        child.total += ret
        adv.visits += 1
        adv.total += ret
        node.visits += 1
        node.total += ret
        return ret

    # -- estimates --------------------------------------------------------------
    def _agent_estimate(self, node: _AgentNode) -> float:
        if self._is_leaf(node.state):
            return 0.0
        if node.actions is None or not any(adv.visits for adv in node.actions):
            return node.total / node.visits if node.visits else 0.0
        return min(self._adversary_estimate(adv) for adv in node.actions if adv.visits)

    def _adversary_estimate(self, adv: _AdversaryNode) -> float:
        """Exact expectation under the most-visited delta, recursing into children."""
        child = max(adv.children, key=lambda ch: ch.visits)
        gamma = self.problem.gamma
        value = 0.0
        for sp in np.flatnonzero(child.q > 0):
            agent = child.children.get(int(sp))
            if agent is None:
                return child.mean
            value += child.q[sp] * (adv.costs[sp] + gamma * self._agent_estimate(agent))
        return float(value)

    def search(self, root_state: BeliefState) -> MctsResult:
        cfg = self.config
        root = self.root = _AgentNode(root_state)
        start = time.perf_counter()
        exhausted = False
        done = 0
        for done in range(1, cfg.iterations + 1):
            self._simulate(root)
            if cfg.time_limit is not None and time.perf_counter() - start > cfg.time_limit:
                exhausted = done < cfg.iterations
                break
        if self._is_leaf(root_state):
            return MctsResult(0.0, 0, {}, done, exhausted)
        estimates = {a: self._adversary_estimate(adv) for a, adv in enumerate(root.actions) if adv.visits}
        best = min(estimates.values())
        action = min(a for a, v in estimates.items() if v <= best + 1e-12)
        stats = dict(
            root_visits=root.visits,
            adversary_nodes=self.adversary_nodes,
            root_delta_children={a: len(adv.children) for a, adv in enumerate(root.actions)},
            action_visits={a: adv.visits for a, adv in enumerate(root.actions)},
        )
        return MctsResult(best, action, estimates, done, exhausted, stats)

    def iter_adversary_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            for adv in node.actions or []:
                yield adv
                for ch in adv.children:
                    stack.extend(ch.children.values())


def solve_bamdp_cvar_mcts(
    problem: BamdpProblem,
    alpha: float,
    horizon: int | None = None,
    iterations: int | None = None,
    config: MctsConfig | None = None,
    initial: BeliefState | None = None,
) -> MctsResult:
    """Approximate the optimal static CVaR of a BAMDP from its initial belief."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    config = MctsConfig() if config is None else config
    if iterations is not None:
        config = MctsConfig(**{**config.__dict__, "iterations": iterations})
    if horizon is not None and horizon != problem.horizon:
        problem = BamdpProblem(problem.prior, problem.gamma, horizon, problem.initial_state, problem.terminals)
    root = initial if initial is not None else problem.initial_belief_state(alpha)
    return CvarMcts(problem, config).search(root)
