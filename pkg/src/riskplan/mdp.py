"""Tabular cost-minimising MDPs and policies.

Costs follow the convention *lower is better*. A reward-maximising problem
maps onto this one by ``cost = -reward``.

Transitions and costs are stored densely as ``(S, A, S)`` arrays, which is
the natural layout at the problem sizes this package targets. Costs sit on
``(s, a, s')`` triples so that arrival costs (a cost received on entering a
particular state) can be expressed directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9


class InvalidMdpError(ValueError):
    """Raised when an MDP or policy violates its invariants."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite MDP with transition-indexed costs.

    Parameters
    ----------
    P : array, shape (S, A, S)
        ``P[s, a, s']`` is the probability of moving to ``s'``.
    C : array, shape (S, A, S)
        ``C[s, a, s']`` is the cost of that transition.
    gamma : float
        Discount in (0, 1].
    horizon : int or None
        Number of decision steps; ``None`` means unbounded (requires gamma < 1).
    initial_state : int
    terminals : frozenset of int
        Absorbing states. Each must self-loop with zero cost under every action.
    """

    P: np.ndarray
    C: np.ndarray
    gamma: float = 1.0
    horizon: int | None = None
    initial_state: int = 0
    terminals: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P))
        object.__setattr__(self, "C", _frozen(self.C))
        object.__setattr__(self, "terminals", frozenset(int(t) for t in self.terminals))
        object.__setattr__(self, "gamma", float(self.gamma))
        self.validate()

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    @property
    def num_actions(self) -> int:
        return self.P.shape[1]

    @property
    def n_stages(self) -> int:
        """Number of distinct decision stages (1 for unbounded problems)."""
        return 1 if self.horizon is None else self.horizon

    def validate(self) -> None:
        P, C = self.P, self.C
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise InvalidMdpError(f"transition table must have shape (S, A, S), got {P.shape}")
        if C.shape != P.shape:
            raise InvalidMdpError(f"cost table shape {C.shape} does not match {P.shape}")
        if not np.all(np.isfinite(P)) or not np.all(np.isfinite(C)):
            raise InvalidMdpError("transition and cost tables must be finite")
        if np.any(P < 0):
            s, a, sp = np.argwhere(P < 0)[0]
            raise InvalidMdpError(f"negative probability at (s={s}, a={a}, s'={sp})")
        sums = P.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
        if len(bad):
            s, a = bad[0]
            raise InvalidMdpError(f"row (s={s}, a={a}) sums to {sums[s, a]!r}, expected 1")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidMdpError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.horizon is None:
            if self.gamma >= 1.0:
                raise InvalidMdpError("an unbounded horizon requires gamma < 1")
        elif int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidMdpError(f"horizon must be a positive integer or None, got {self.horizon!r}")
        S = self.num_states
        if not 0 <= self.initial_state < S:
            raise InvalidMdpError(f"initial_state {self.initial_state} out of range")
        for t in self.terminals:
            if not 0 <= t < S:
                raise InvalidMdpError(f"terminal state {t} out of range")
            if np.any(np.abs(P[t, :, t] - 1.0) > PROB_TOL) or np.any(C[t, :, t] != 0.0):
                raise InvalidMdpError(f"terminal state {t} must self-loop with zero cost under every action")

    def successors(self, s: int, a: int) -> Iterator[tuple[int, float, float]]:
        """Yield ``(s', p, cost)`` for every successor with positive probability."""
        for sp in np.flatnonzero(self.P[s, a] > 0):
            yield int(sp), float(self.P[s, a, sp]), float(self.C[s, a, sp])

    def expected_costs(self) -> np.ndarray:
        """Expected immediate cost, shape (S, A)."""
        return np.einsum("sap,sap->sa", self.P, self.C)

    def with_(self, **changes) -> "Mdp":
        fields = dict(P=self.P, C=self.C, gamma=self.gamma, horizon=self.horizon,
                      initial_state=self.initial_state, terminals=self.terminals)
        fields.update(changes)
        return Mdp(**fields)


def mdp_from_rows(
    num_states: int,
    num_actions: int,
    rows: Mapping[tuple[int, int], Sequence[tuple[int, float, float]]],
    *,
    gamma: float = 1.0,
    horizon: int | None = None,
    initial_state: int = 0,
    terminals: Iterable[int] = (),
) -> Mdp:
    """Build an :class:`Mdp` from sparse rows ``{(s, a): [(s', p, cost), ...]}``.

    Terminal states get zero-cost self loops automatically. For a
    non-terminal state, actions without a row copy the row of the lowest
    defined action, so single-choice states only need one entry.
    """
    terminals = frozenset(terminals)
    P = np.zeros((num_states, num_actions, num_states))
    C = np.zeros_like(P)
    for s in range(num_states):
        if s in terminals:
            P[s, :, s] = 1.0
            continue
        defined = sorted(a for (ss, a) in rows if ss == s)
        if not defined:
            raise InvalidMdpError(f"state {s} has no transitions and is not terminal")
        for a in range(num_actions):
            src = a if a in defined else defined[0]
            for sp, p, c in rows[(s, src)]:
                if P[s, a, sp] > 0:
                    raise InvalidMdpError(f"duplicate successor {sp} in row (s={s}, a={src})")
                P[s, a, sp] = p
                C[s, a, sp] = c
    return Mdp(P, C, gamma=gamma, horizon=horizon, initial_state=initial_state, terminals=terminals)


@dataclass(frozen=True, eq=False)
class Policy:
    """Action distributions indexed by state, optionally also by stage.

    ``probs`` has shape ``(S, A)`` for a stationary policy or ``(H, S, A)``
    for a finite-horizon, stage-dependent one. Deterministic policies are
    rows with a single unit entry.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim not in (2, 3):
            raise InvalidMdpError(f"policy table must be 2-D or 3-D, got shape {probs.shape}")
        if np.any(probs < -PROB_TOL) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROB_TOL):
            raise InvalidMdpError("policy rows must be probability distributions")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(num_actions)[actions])

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def is_stationary(self) -> bool:
        return self.probs.ndim == 2

    @property
    def num_states(self) -> int:
        return self.probs.shape[-2]

    def at(self, t: int) -> np.ndarray:
        """The ``(S, A)`` table in force at stage ``t``."""
        if self.is_stationary:
            return self.probs
        return self.probs[min(t, self.probs.shape[0] - 1)]

    def greedy_actions(self, t: int = 0) -> np.ndarray:
        return np.argmax(self.at(t), axis=1)


def check_policy(mdp: Mdp, policy: Policy) -> None:
    if policy.probs.shape[-2:] != (mdp.num_states, mdp.num_actions):
        raise InvalidMdpError(
            f"policy shape {policy.probs.shape} incompatible with MDP ({mdp.num_states}, {mdp.num_actions})"
        )


# --------------------------------------------------------------------------- I/O

def _entry_error(i: int, row: dict, msg: str, block: str = "transitions") -> InvalidMdpError:
    where = f"{block}[{i}]"
    if isinstance(row, dict) and "s" in row and "a" in row:
        where += f" (s={row['s']}, a={row['a']})"
    return InvalidMdpError(f"{where}: {msg}")


def _parse_rows(S: int, A: int, transitions: list, block: str = "transitions", weight: str = "p") -> dict:
    """Validate ``{"s", "a", "next": [{"sp", weight, "cost"}]}`` entries into a row dict.

    ``weight="p"`` rows must sum to one; any other weight (Dirichlet
    counts) must be positive per listed successor.
    """
    def error(i, row, msg):
        return _entry_error(i, row, msg, block)

    if not isinstance(transitions, list):
        raise InvalidMdpError(f"{block} must be a list")
    rows: dict[tuple[int, int], list] = {}
    for i, row in enumerate(transitions):
        try:
            s, a, nxt = int(row["s"]), int(row["a"]), row["next"]
        except (KeyError, TypeError, ValueError) as exc:
            raise error(i, row, f"malformed row ({exc})") from None
        if not (0 <= s < S and 0 <= a < A):
            raise error(i, row, "state or action index out of range")
        if (s, a) in rows:
            raise error(i, row, "duplicate (s, a) row")
        parsed, seen = [], set()
        for j, nx in enumerate(nxt):
            try:
                sp, p, c = int(nx["sp"]), float(nx[weight]), float(nx["cost"])
            except (KeyError, TypeError, ValueError):
                raise error(i, row, f"next[{j}] needs integer 'sp', float '{weight}' and 'cost'") from None
            if not 0 <= sp < S:
                raise error(i, row, f"next[{j}] successor {sp} out of range")
            if p < 0:
                raise error(i, row, f"next[{j}] negative {weight} {p}")
            if weight != "p" and p == 0:
                raise error(i, row, f"next[{j}] {weight} must be positive; omit the successor instead")
            if sp in seen:
                raise error(i, row, f"next[{j}] duplicate successor {sp}")
            seen.add(sp)
            parsed.append((sp, p, c))
        total = sum(p for _, p, _ in parsed)
        if weight == "p" and abs(total - 1.0) > PROB_TOL:
            raise error(i, row, f"probabilities sum to {total!r}, expected 1")
        if weight != "p" and not parsed:
            raise error(i, row, "row lists no successors")
        rows[(s, a)] = parsed
    return rows


def _tables_from_rows(S: int, A: int, rows: dict, terminals: frozenset) -> tuple[np.ndarray, np.ndarray]:
    P = np.zeros((S, A, S))
    C = np.zeros_like(P)
    for s in range(S):
        for a in range(A):
            if (s, a) in rows:
                for sp, p, c in rows[(s, a)]:
                    P[s, a, sp] = p
                    C[s, a, sp] = c
            elif s in terminals:
                P[s, a, s] = 1.0
            else:
                raise InvalidMdpError(f"missing transitions row for (s={s}, a={a})")
    return P, C


def _shared_fields(doc: Mapping) -> dict:
    try:
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        horizon = doc.get("horizon")
        return dict(
            num_states=S,
            num_actions=A,
            gamma=float(doc.get("gamma", 1.0)),
            horizon=None if horizon is None else int(horizon),
            initial_state=int(doc.get("initial_state", 0)),
            terminals=frozenset(int(t) for t in doc.get("terminals", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidMdpError(f"malformed MDP header: {exc}") from None


def mdp_from_dict(doc: Mapping) -> Mdp:
    """Parse the JSON MDP schema (see README). Terminal rows may be omitted."""
    shared = _shared_fields(doc)
    S, A = shared.pop("num_states"), shared.pop("num_actions")
    rows = _parse_rows(S, A, doc.get("transitions", []))
    P, C = _tables_from_rows(S, A, rows, shared["terminals"])
    return Mdp(P, C, **shared)


def mdp_to_dict(mdp: Mdp) -> dict:
    return {
        **shared_to_dict(mdp),
        "transitions": transitions_to_list(mdp),
    }


def shared_to_dict(mdp: Mdp) -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "horizon": mdp.horizon,
        "initial_state": mdp.initial_state,
        "terminals": sorted(mdp.terminals),
    }


def transitions_to_list(mdp: Mdp) -> list:
    out = []
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            out.append({
                "s": s,
                "a": a,
                "next": [{"sp": sp, "p": p, "cost": c} for sp, p, c in mdp.successors(s, a)],
            })
    return out


def load_mdp(path: str | Path) -> Mdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))


def save_mdp(mdp: Mdp, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh, indent=1)
