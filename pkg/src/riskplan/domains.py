"""Small canonical problems used by the tests, demos and CLI."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .bamdp import BamdpProblem, DirichletBelief
from .mdp import Mdp, mdp_from_rows
from .uncertain import SampleUncertainMdp


class UnknownDomain(KeyError):
    pass


class BadParameter(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    name: str
    parameters: dict = field(default_factory=dict)


_REGISTRY: dict[str, tuple[Callable, dict, str]] = {}


def register(name: str, defaults: dict, summary: str):
    def deco(fn):
        _REGISTRY[name] = (fn, defaults, summary)
        return fn

    return deco


def list_domains() -> dict[str, str]:
    return {name: summary for name, (_, _, summary) in sorted(_REGISTRY.items())}


def domain_defaults(name: str) -> dict:
    if name not in _REGISTRY:
        raise UnknownDomain(name)
    return dict(_REGISTRY[name][1])


def build(spec: DomainSpec | str, **params) -> Any:
    """Build a registered domain; keyword parameters override the spec's."""
    if isinstance(spec, str):
        spec = DomainSpec(spec, params)
    elif params:
        spec = DomainSpec(spec.name, {**spec.parameters, **params})
    if spec.name not in _REGISTRY:
        raise UnknownDomain(f"unknown domain {spec.name!r}; known: {', '.join(sorted(_REGISTRY))}")
    fn, defaults, _ = _REGISTRY[spec.name]
    unknown = set(spec.parameters) - set(defaults)
    if unknown:
        raise BadParameter(f"{spec.name}: unknown parameter(s) {sorted(unknown)}")
    return fn(**{**defaults, **spec.parameters})


def _require(ok: bool, msg: str) -> None:
    if not ok:
        raise BadParameter(msg)


@register("fig22-chain", {}, "two-step fair coin chain with leaf costs AA=4, AB=2, BA=2, BB=0")
def fig22_chain() -> Mdp:
    """Two steps of a fair A/B coin with costs received on the final step.

    The leaf costs AA=4, AB=2, BA=2 follow the figure's annotation; BB=0 is
    a reconstruction chosen so the chain reproduces both quoted CVaR values
    (3 static, 4 dynamic, alpha = 0.5).

    States: 0 start, 1 after A, 2 after B, 3 end via A, 4 end via B.
    """
    rows = {
        (0, 0): [(1, 0.5, 0.0), (2, 0.5, 0.0)],
        (1, 0): [(3, 0.5, 4.0), (4, 0.5, 2.0)],
        (2, 0): [(3, 0.5, 2.0), (4, 0.5, 0.0)],
    }
    return mdp_from_rows(5, 1, rows, horizon=2, terminals=[3, 4])


@register("tie-bandit", {}, "deterministic cost 2 vs fair {0, 2}: equal CVaR_0.5, different means")
def tie_bandit() -> Mdp:
    """Action 0 costs 2 surely; action 1 costs 0 or 2 with equal odds."""
    rows = {
        (0, 0): [(2, 1.0, 2.0)],
        (0, 1): [(1, 0.5, 0.0), (2, 0.5, 2.0)],
    }
    return mdp_from_rows(3, 2, rows, horizon=1, terminals=[1, 2])


@register("two-step-switch", {}, "coin flip into a safe/risky choice or a forced cost-2 branch")
def two_step_switch() -> Mdp:
    """From the start, cost 0 to state 1 or cost 2 to state 2 (equal odds).

    State 1 offers a sure cost 2 (action 0) or cost 0 w.p. 0.9 / 2 w.p. 0.1
    (action 1). State 2 forces a further cost 2.
    """
    rows = {
        (0, 0): [(1, 0.5, 0.0), (2, 0.5, 2.0)],
        (1, 0): [(4, 1.0, 2.0)],
        (1, 1): [(3, 0.9, 0.0), (4, 0.1, 2.0)],
        (2, 0): [(4, 1.0, 2.0)],
    }
    return mdp_from_rows(5, 2, rows, horizon=2, terminals=[3, 4])


@register("regret-bandit", {}, "two-sample bandit, costs (0, 2) and (3, 1)")
def regret_bandit() -> SampleUncertainMdp:
    samples = []
    for costs in ((0.0, 2.0), (3.0, 1.0)):
        rows = {(0, a): [(1, 1.0, c)] for a, c in enumerate(costs)}
        samples.append(mdp_from_rows(2, 2, rows, horizon=1, terminals=[1]))
    return SampleUncertainMdp(tuple(samples))


LEFT, RIGHT, DRIFT = 0, 1, 2


@register("current-field", {"width": 3, "length": 4, "cost_against": 2.0},
          "corridor with an unknown current, pushing left in one sample and right in the other")
def current_field(width: int, length: int, cost_against: float) -> SampleUncertainMdp:
    """Each step moves one row ahead. Steering with the current is free and
    against it costs ``cost_against``; drifting costs half that and lets the
    current move you sideways, which reveals its direction.

    State ``r * width + c`` is row ``r``, column ``c``; the last index is the
    goal. The start is the middle column of row 0.
    """
    _require(int(width) == width and width >= 2, "width must be an integer >= 2")
    _require(int(length) == length and length >= 1, "length must be a positive integer")
    _require(cost_against > 0, "cost_against must be positive")
    width, length = int(width), int(length)
    goal = width * length
    samples = []
    for current in (-1, +1):
        rows = {}
        for r in range(length):
            for c in range(width):
                s = r * width + c

                def dest(col):
                    return goal if r + 1 == length else (r + 1) * width + min(max(col, 0), width - 1)

                rows[(s, LEFT)] = [(dest(c - 1), 1.0, 0.0 if current < 0 else cost_against)]
                rows[(s, RIGHT)] = [(dest(c + 1), 1.0, 0.0 if current > 0 else cost_against)]
                rows[(s, DRIFT)] = [(dest(c + current), 1.0, cost_against / 2)]
        samples.append(mdp_from_rows(goal + 1, 3, rows, horizon=length, initial_state=width // 2,
                                     terminals=[goal]))
    return SampleUncertainMdp(tuple(samples))


UP, DOWN, WEST, EAST = 0, 1, 2, 3
_MOVES = {UP: (0, 1), DOWN: (0, -1), WEST: (-1, 0), EAST: (1, 0)}
_PERPENDICULAR = {UP: (WEST, EAST), DOWN: (WEST, EAST), WEST: (UP, DOWN), EAST: (UP, DOWN)}


@register("grid-nav", {"w": 4, "h": 3, "slip": 0.1, "pit_cost": 10.0, "horizon": None},
          "slippery grid from (0,0) to the far corner with a row of pits beside the start")
def grid_nav(w: int, h: int, slip: float, pit_cost: float, horizon: int | None) -> Mdp:
    """Step cost 1; entering a pit costs ``pit_cost`` and ends the episode.

    With probability ``slip`` the move goes to one of the two perpendicular
    directions instead (equally likely). Walls block. Pits occupy
    ``(x, 0)`` for ``1 <= x <= w - 2`` when ``h >= 3``. Cell ``(x, y)`` is
    state ``y * w + x``. The default horizon is ``2 * (w + h)``.
    """
    _require(int(w) == w and int(h) == h and w >= 2 and h >= 2, "w and h must be integers >= 2")
    _require(0.0 <= slip < 1.0, "slip must lie in [0, 1)")
    _require(pit_cost >= 0, "pit_cost must be nonnegative")
    w, h = int(w), int(h)
    horizon = 2 * (w + h) if horizon is None else int(horizon)
    _require(horizon >= 1, "horizon must be positive")
    goal = (w - 1) + (h - 1) * w
    pits = {x for x in range(1, w - 1)} if h >= 3 else set()
    terminals = {goal} | pits
    S = w * h
    P = np.zeros((S, 4, S))
    C = np.zeros_like(P)
    for s in range(S):
        if s in terminals:
            P[s, :, s] = 1.0
            continue
        x, y = s % w, s // w
        for a in range(4):
            outcomes = [(a, 1.0 - slip)] + [(b, slip / 2) for b in _PERPENDICULAR[a]]
            for move, p in outcomes:
                if p == 0:
                    continue
                dx, dy = _MOVES[move]
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h):
                    nx, ny = x, y
                sp = ny * w + nx
                P[s, a, sp] += p
                C[s, a, sp] = pit_cost if sp in pits else 1.0
    return Mdp(P, C, gamma=1.0, horizon=horizon, initial_state=0, terminals=terminals)


@register("two-arm-bamdp", {"counts": (1.0, 1.0), "pulls": 1},
          "arm 1 costs 1 surely; arm 2 costs 0 or 2 with Dirichlet-uncertain odds")
def two_arm_bamdp(counts=(1.0, 1.0), pulls: int = 1) -> BamdpProblem:
    """A two-armed bandit as a BAMDP.

    States: 0 choose, 1 paid arm 1 (cost 1), 2 arm 2 paid 0, 3 arm 2 paid 2.
    States 1-3 return to 0 at no cost so that arm 2's belief row is shared
    across pulls; ``pulls`` pulls therefore take ``2 * pulls - 1`` steps.
    """
    counts = tuple(float(c) for c in counts)
    _require(len(counts) == 2 and min(counts) > 0, "counts must be two positive numbers")
    _require(int(pulls) == pulls and pulls >= 1, "pulls must be a positive integer")
    S, A = 4, 2
    N = np.zeros((S, A, S))
    C = np.zeros_like(N)
    N[0, 0, 1], C[0, 0, 1] = 1.0, 1.0
    N[0, 1, 2], C[0, 1, 2] = counts[0], 0.0
    N[0, 1, 3], C[0, 1, 3] = counts[1], 2.0
    N[1:, :, 0] = 1.0
    return BamdpProblem(DirichletBelief(N, C), gamma=1.0, horizon=2 * int(pulls) - 1, initial_state=0)
