"""Config-driven experiment runs: resolve a config, dispatch a solver, export.

A config is a JSON object::

    {"problem": "fig22-chain" | {"domain": name, "params": {...}}
                | {"file": path} | {"mdp": {...}} | {"uncertain": {...}}
                | {"bamdp": {...}},
     "solver": "static-cvar",
     "params": {"alpha": 0.5},
     "seed": 0,
     "verify": null | {"oracle": "oracle-static-cvar", "tol": 0.02, ...},
     "sweep": {"alpha": [0.1, 0.5]}}

Every run yields one CSV row with the fixed columns in ``COLUMNS`` and a
policy export that ``evaluate_export`` can re-evaluate.
"""
from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import domains
from .bamdp import BamdpProblem, bamdp_from_dict, exact_bamdp_cvar
from .cvar_planning import (
    DEFAULT_GRID_POINTS,
    AugmentedPolicy,
    LexPolicy,
    YGrid,
    augmented_return_distribution,
    dynamic_cvar_evaluation,
    lex_return_distribution,
    solve_dynamic_cvar,
    solve_lexicographic,
    solve_static_cvar,
)
from .distribution import AtomCapExceeded
from .matrix_game import GameTooLarge
from .mcts import MctsConfig, solve_bamdp_cvar_mcts
from .mdp import InvalidMdpError, Mdp, Policy, mdp_from_dict
from .oracles import (
    DEFAULT_POLICY_CAP,
    OracleCapExceeded,
    exhaustive_lexicographic,
    exhaustive_static_cvar,
    markov_policies,
)
from .risk import cvar
from .solvers import policy_evaluation, value_iteration
from .uncertain import (
    OptionPolicy,
    PlanCapExceeded,
    SampleUncertainMdp,
    evaluate_regret,
    exact_minimax_regret,
    robust_option_evaluation,
    robust_policy_evaluation,
    robust_value_iteration,
    solve_minimax_regret_approx,
    solve_minimax_regret_options,
    uncertain_from_dict,
)

COLUMNS = ("problem", "solver", "alpha", "n", "seed", "value", "oracle_value", "gap", "wall_ms", "status")


class ConfigError(ValueError):
    pass


class OracleMismatch(RuntimeError):
    pass


EXIT_CODES = {ConfigError: 2, InvalidMdpError: 3, AtomCapExceeded: 4, OracleCapExceeded: 4,
              PlanCapExceeded: 4, GameTooLarge: 4, OracleMismatch: 5}
STATUS = {2: "config-error", 3: "invariant-error", 4: "cap-exceeded", 5: "oracle-mismatch", 1: "error"}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (domains.UnknownDomain, domains.BadParameter)):
        return 2
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


# ------------------------------------------------------------------- solvers

@dataclass(frozen=True)
class SolverInfo:
    kind: str  # "mdp", "uncertain" or "bamdp"
    defaults: dict
    required: tuple = ()
    oracle: str | None = None
    tol: float = 1e-6


SOLVERS = {
    "ev": SolverInfo("mdp", {"tol": 1e-12}, oracle="oracle-ev"),
    "static-cvar": SolverInfo("mdp", {"grid": DEFAULT_GRID_POINTS, "tol": 1e-8}, ("alpha",), "oracle-static-cvar", 0.02),
    "dynamic-cvar": SolverInfo("mdp", {"tol": 1e-12}, ("alpha",), "oracle-dynamic-cvar"),
    "lexicographic": SolverInfo("mdp", {"grid": DEFAULT_GRID_POINTS, "tol": 1e-8}, ("alpha",), "oracle-lexicographic"),
    "robust": SolverInfo("uncertain", {"tol": 1e-12}, oracle="oracle-robust"),
    "minimax-regret": SolverInfo("uncertain", {"stochastic": False, "tol": 1e-12}, oracle="oracle-minimax-regret"),
    "minimax-regret-options": SolverInfo("uncertain", {"n": 1, "cap": 10**5, "tol": 1e-12},
                                         oracle="oracle-minimax-regret"),
    "bamdp-cvar": SolverInfo("bamdp", {"iterations": 10_000, "widening_c": 1.0, "widening_exponent": 0.5,
                                       "exploration": 2.0, "horizon": None}, ("alpha",), "oracle-bamdp-cvar", 0.1),
    "oracle-ev": SolverInfo("mdp", {"cap": DEFAULT_POLICY_CAP}),
    "oracle-static-cvar": SolverInfo("mdp", {"cap": DEFAULT_POLICY_CAP}, ("alpha",)),
    "oracle-dynamic-cvar": SolverInfo("mdp", {"cap": DEFAULT_POLICY_CAP}, ("alpha",)),
    "oracle-lexicographic": SolverInfo("mdp", {"cap": DEFAULT_POLICY_CAP}, ("alpha",)),
    "oracle-robust": SolverInfo("uncertain", {"cap": DEFAULT_POLICY_CAP}),
    "oracle-minimax-regret": SolverInfo("uncertain", {"policy_class": "deterministic", "grid_step": 0.01,
                                                      "cap": DEFAULT_POLICY_CAP}),
    "oracle-bamdp-cvar": SolverInfo("bamdp", {"cap": DEFAULT_POLICY_CAP, "horizon": None}, ("alpha",)),
}


# ------------------------------------------------------------------- config

def _as_problem_spec(problem) -> dict:
    if isinstance(problem, str):
        return {"domain": problem, "params": {}}
    if not isinstance(problem, dict):
        raise ConfigError("problem must be a domain name or an object")
    keys = {"domain", "file", "mdp", "uncertain", "bamdp"} & set(problem)
    if len(keys) != 1:
        raise ConfigError("problem needs exactly one of: domain, file, mdp, uncertain, bamdp")
    if "domain" in problem:
        return {"domain": problem["domain"], "params": dict(problem.get("params", {}))}
    if "file" in problem:
        try:
            with open(problem["file"]) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read problem file {problem['file']!r}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"problem file {problem['file']!r} must hold a JSON object")
        kind = "uncertain" if "shared" in doc else "bamdp" if "prior" in doc else "mdp"
        spec = {kind: doc}
        spec["name"] = problem.get("name", Path(problem["file"]).stem)
        return spec
    return dict(problem)


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Fill defaults, inline file problems and make the seed explicit."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"problem", "solver", "params", "seed", "verify", "sweep"}
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    if "problem" not in raw or "solver" not in raw:
        raise ConfigError("config needs 'problem' and 'solver'")
    solver = raw["solver"]
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}; known: {', '.join(SOLVERS)}")
    info = SOLVERS[solver]
    params = {**info.defaults, **raw.get("params", {})}
    sweep = raw.get("sweep") or {}
    missing = [k for k in info.required if k not in params and k not in sweep]
    if missing:
        raise ConfigError(f"solver {solver!r} needs parameter(s) {missing}")
    verify = raw.get("verify")
    if verify is not None:
        verify = resolve_verify(solver, verify)
    out = {
        "problem": _as_problem_spec(raw["problem"]),
        "solver": solver,
        "params": params,
        "seed": int(raw.get("seed", 0) if seed is None else seed),
        "verify": verify,
    }
    if "sweep" in raw:
        if not isinstance(sweep, dict) or not all(isinstance(v, list) for v in sweep.values()):
            raise ConfigError("sweep must map parameter names to lists of values")
        out["sweep"] = sweep
    return out


def resolve_verify(solver: str, verify) -> dict:
    """Accept ``True``, a dict, or tokens such as ``["oracle", "grid", ".01"]`` or ``"oracle grid .01"``."""
    info = SOLVERS[solver]
    if solver.startswith("oracle-"):
        raise ConfigError("oracle solvers cannot be verified against themselves")
    if info.oracle is None:
        raise ConfigError(f"no oracle for solver {solver!r}")
    out = {"oracle": info.oracle, "tol": info.tol, "params": {}}
    if verify is True:
        return out
    if isinstance(verify, dict):
        extra = set(verify) - {"oracle", "tol", "params"}
        if extra:
            raise ConfigError(f"unknown verify key(s) {sorted(extra)}")
        out.update({k: v for k, v in verify.items() if k != "params"})
        out["params"] = dict(verify.get("params", {}))
        if out["oracle"] not in SOLVERS or not out["oracle"].startswith("oracle-"):
            raise ConfigError(f"unknown oracle {out['oracle']!r}")
        return out
    tokens = verify.split() if isinstance(verify, str) else list(verify)
    if tokens and tokens[0] == "oracle":
        tokens.pop(0)
    while tokens:
        key = tokens.pop(0)
        if not tokens:
            raise ConfigError(f"--verify {key} needs a value")
        val = tokens.pop(0)
        try:
            if key == "grid":
                out["params"].update(policy_class="grid-stochastic", grid_step=float(val))
            elif key == "tol":
                out["tol"] = float(val)
            elif key == "cap":
                out["params"]["cap"] = int(float(val))
            else:
                raise ConfigError(f"unknown --verify option {key!r} (use grid, tol or cap)")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value {val!r} for --verify {key}") from None
    return out


def problem_label(spec: dict) -> str:
    if "domain" in spec:
        params = spec.get("params") or {}
        if not params:
            return spec["domain"]
        inner = ",".join(f"{k}={params[k]}" for k in sorted(params))
        return f"{spec['domain']}({inner})"
    return spec.get("name", next(k for k in ("mdp", "uncertain", "bamdp") if k in spec))


def build_problem(spec: dict):
    if "domain" in spec:
        return domains.build(spec["domain"], **spec.get("params", {}))
    if "mdp" in spec:
        return mdp_from_dict(spec["mdp"])
    if "uncertain" in spec:
        return uncertain_from_dict(spec["uncertain"])
    return bamdp_from_dict(spec["bamdp"])


def _coerce(problem, kind: str, solver: str):
    if kind == "mdp":
        if isinstance(problem, Mdp):
            return problem
    elif kind == "uncertain":
        if isinstance(problem, SampleUncertainMdp):
            return problem
        if isinstance(problem, Mdp):
            return SampleUncertainMdp((problem,))
    elif kind == "bamdp":
        if isinstance(problem, BamdpProblem):
            return problem
        if isinstance(problem, Mdp):
            return BamdpProblem.from_mdp(problem)
    raise ConfigError(f"solver {solver!r} cannot run on a {type(problem).__name__}")


def _grid(params: dict, alpha: float) -> YGrid:
    g = params.get("grid", DEFAULT_GRID_POINTS)
    if isinstance(g, list):
        return YGrid.make(sorted(set(g) | {alpha, 1.0}))
    return YGrid.default(alpha, n=int(g))


# ------------------------------------------------------------------ exports

def _augmented_export(pol: AugmentedPolicy) -> dict:
    return {
        "alpha": pol.alpha,
        "grid": pol.grid.points.tolist(),
        "values": pol.values.tolist(),
        "actions": pol.actions.tolist(),
        "deltas": pol.deltas.tolist(),
    }


def _augmented_import(mdp: Mdp, doc: dict) -> AugmentedPolicy:
    return AugmentedPolicy(mdp, float(doc["alpha"]), YGrid.make(doc["grid"]), np.asarray(doc["values"], float),
                           np.asarray(doc["actions"], int), np.asarray(doc["deltas"], float))


def _plan_export(plan):
    if plan is None:
        return None
    a, subplans = plan
    return {"a": int(a), "next": [[int(sp), _plan_export(sub)] for sp, sub in sorted(subplans.items())]}


def _plan_import(doc):
    if doc is None:
        return None
    return int(doc["a"]), {int(sp): _plan_import(sub) for sp, sub in doc["next"]}


def _executed_static_cvar(pol: AugmentedPolicy) -> float:
    if pol.mdp.horizon is None:
        return pol.value()
    return cvar(augmented_return_distribution(pol), pol.alpha)


# --------------------------------------------------------------------- runs

def _solve(problem, solver: str, params: dict, seed: int) -> tuple[float, dict]:
    """Run one solver; return its reported value and the policy payload."""
    info = SOLVERS[solver]
    problem = _coerce(problem, info.kind, solver)
    alpha = params.get("alpha")
    if alpha is not None:
        alpha = float(alpha)
        if not 0.0 < alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")

    if solver == "ev":
        v, pol = value_iteration(problem, params["tol"])
        return float(v[problem.initial_state]), {"kind": "table", "probs": pol.probs.tolist()}
    if solver == "static-cvar":
        _, pol = solve_static_cvar(problem, alpha, _grid(params, alpha), params["tol"])
        payload = {"kind": "augmented", "grid_value": pol.value(), **_augmented_export(pol)}
        return _executed_static_cvar(pol), payload
    if solver == "dynamic-cvar":
        v, pol = solve_dynamic_cvar(problem, alpha, params["tol"])
        return float(v[problem.initial_state]), {"kind": "table", "probs": pol.probs.tolist()}
    if solver == "lexicographic":
        lex = solve_lexicographic(problem, alpha, _grid(params, alpha), params["tol"])
        dist = lex_return_distribution(lex)
        payload = {
            "kind": "lexicographic",
            "base": _augmented_export(lex.base),
            "var_star": lex.var_star,
            "switch": [[t, s, b, int(a)] for (t, s, b), a in sorted(lex.switch_table.items())],
            "constrained": [[t, s, b, int(a)] for (t, s, b), a in sorted(lex.constrained_actions.items())],
            "cvar": cvar(dist, alpha),
        }
        return dist.mean, payload
    if solver == "robust":
        w, pol = robust_value_iteration(problem, params["tol"])
        return float(w[problem.ref.initial_state]), {"kind": "table", "probs": pol.probs.tolist()}
    if solver == "minimax-regret":
        w, pol = solve_minimax_regret_approx(problem, params["tol"], stochastic=bool(params["stochastic"]))
        return float(w[problem.ref.initial_state]), {"kind": "table", "probs": pol.probs.tolist()}
    if solver == "minimax-regret-options":
        w, pol = solve_minimax_regret_options(problem, int(params["n"]), params["tol"], int(params["cap"]))
        plans = [[t, s, _plan_export(p)] for (t, s), p in sorted(pol.plans.items())]
        return float(w[problem.ref.initial_state]), {"kind": "options", "n": pol.n, "plans": plans}
    if solver == "bamdp-cvar":
        cfg = MctsConfig(
            iterations=int(params["iterations"]),
            widening_c=float(params["widening_c"]),
            widening_exponent=float(params["widening_exponent"]),
            exploration=float(params["exploration"]),
            seed=seed,
        )
        res = solve_bamdp_cvar_mcts(problem, alpha, params.get("horizon"), config=cfg)
        estimates = {str(a): v for a, v in sorted(res.action_estimates.items())}
        return res.estimate, {"kind": "search", "root_action": res.action, "action_estimates": estimates}
    return _oracle(problem, solver, params, alpha)


def _oracle(problem, solver: str, params: dict, alpha) -> tuple[float, dict]:
    cap = int(params["cap"])
    if solver == "oracle-ev":
        res = exhaustive_static_cvar(problem, 1.0, cap=cap)
        return res.value, {"kind": "value", "action": res.action}
    if solver == "oracle-static-cvar":
        res = exhaustive_static_cvar(problem, alpha, cap=cap)
        return res.value, {"kind": "value", "action": res.action}
    if solver == "oracle-lexicographic":
        res = exhaustive_lexicographic(problem, alpha, cap=cap)
        return res.value, {"kind": "value", "action": res.action}
    if solver == "oracle-bamdp-cvar":
        res = exact_bamdp_cvar(problem, alpha, params.get("horizon"), cap=cap)
        return res.value, {"kind": "value", "action": res.action}
    if solver == "oracle-minimax-regret":
        val, pol = exact_minimax_regret(problem, params["policy_class"], float(params["grid_step"]), cap)
        return val, {"kind": "table", "probs": pol.probs.tolist()}
    if solver == "oracle-dynamic-cvar":
        best, probs = _markov_search(problem, cap, lambda m, p: dynamic_cvar_evaluation(m, p, alpha))
        return best, {"kind": "table", "probs": probs.tolist()}
    if solver == "oracle-robust":
        best, probs = _markov_search(problem, cap, robust_policy_evaluation, ref=problem.ref)
        return best, {"kind": "table", "probs": probs.tolist()}
    raise ConfigError(f"unknown solver {solver!r}")  # pragma: no cover


def _markov_search(problem, cap, evaluate, ref: Mdp | None = None):
    ref = problem if ref is None else ref
    if ref.horizon is None:
        raise ConfigError("the policy enumeration oracle needs a finite horizon")
    best, best_probs = np.inf, None
    for probs in markov_policies(ref.num_states, ref.num_actions, ref.horizon, ref.terminals, cap):
        val = float(evaluate(problem, Policy(probs))[ref.initial_state])
        if val < best - 1e-12:
            best, best_probs = val, probs
    return best, best_probs


def run(config: dict, timing: bool = False) -> tuple[dict, dict]:
    """Run a resolved config. Returns ``(csv_row, policy_export)``.

    Raises on any error; ``run_cell`` turns errors into rows.
    """
    params = config["params"]
    start = time.perf_counter()
    problem = build_problem(config["problem"])
    value, payload = _solve(problem, config["solver"], params, config["seed"])
    wall = (time.perf_counter() - start) * 1e3
    row = _row(config, value=value, status="ok", wall=wall if timing else None)
    verify = config.get("verify")
    if verify is not None:
        oparams = {**SOLVERS[verify["oracle"]].defaults, **{k: v for k, v in params.items() if k in ("alpha",)},
                   **verify["params"]}
        oracle_value, _ = _solve(problem, verify["oracle"], oparams, config["seed"])
        gap = value - oracle_value
        row.update(oracle_value=_fmt(oracle_value), gap=_fmt(gap))
        if abs(gap) > verify["tol"]:
            row["status"] = "oracle-mismatch"
            raise _mismatch(row, _export(config, value, payload), config, value, verify, oracle_value, gap)
        row["status"] = "verified"
    return row, _export(config, value, payload)


def _mismatch(row, export, config, value, verify, oracle_value, gap) -> OracleMismatch:
    exc = OracleMismatch(
        f"{config['solver']} value {value!r} vs {verify['oracle']} {oracle_value!r} "
        f"(gap {gap:.3g} > tol {verify['tol']})"
    )
    exc.row, exc.export = row, export
    return exc


def _export(config: dict, value: float, payload: dict) -> dict:
    problem = config["problem"]
    return {"solver": config["solver"], "problem": problem, "params": config["params"], "seed": config["seed"],
            "value": value, "policy": payload}


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float) or isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


def _row(config: dict, value=None, status="ok", wall=None) -> dict:
    params = config["params"]
    solver = config["solver"]
    n = params.get("n") if solver == "minimax-regret-options" else params.get("iterations") if solver == "bamdp-cvar" else None
    return {
        "problem": problem_label(config["problem"]),
        "solver": solver,
        "alpha": _fmt(params.get("alpha")),
        "n": _fmt(n),
        "seed": str(config["seed"]),
        "value": _fmt(value),
        "oracle_value": "",
        "gap": "",
        "wall_ms": "" if wall is None else f"{wall:.1f}",
        "status": status,
    }


def run_cell(config: dict, timing: bool = False) -> tuple[dict, dict | None]:
    """Like ``run`` but never raises: errors become the row's status."""
    try:
        return run(config, timing)
    except OracleMismatch as exc:
        return exc.row, exc.export
    except Exception as exc:  # noqa: BLE001 - every failure is reported in-row
        return error_row(config, exc), None


def error_row(config: dict, exc: BaseException) -> dict:
    return _row(config, status=f"{STATUS[exit_code(exc)]}: {exc}".replace("\n", " "))


# -------------------------------------------------------------------- sweeps

def sweep_cells(config: dict) -> list[dict]:
    """Expand a resolved config's sweep grid in lexicographic cell order.

    Keys are sorted; values keep their listed order. ``domain.<name>``
    keys set domain parameters, ``seed`` overrides the base seed, every
    other key sets a solver parameter. Cell ``i`` gets seed ``base + i``.
    """
    grid = config.get("sweep") or {}
    if any(len(v) == 0 for v in grid.values()):
        return []
    keys = sorted(grid)
    cells = []
    for i, combo in enumerate(product(*(grid[k] for k in keys))):
        cell = copy.deepcopy({k: v for k, v in config.items() if k != "sweep"})
        cell["seed"] = config["seed"] + i
        for key, val in zip(keys, combo):
            if key.startswith("domain."):
                if "domain" not in cell["problem"]:
                    raise ConfigError(f"sweep key {key!r} needs a domain problem")
                cell["problem"]["params"][key[len("domain."):]] = val
            else:
                cell["params"][key] = val
        cells.append(cell)
    return cells


def run_sweep(config: dict, jobs: int = 1, timing: bool = False) -> list[tuple[dict, dict | None]]:
    cells = sweep_cells(config)
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(c, timing) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells, [timing] * len(cells)))


# ---------------------------------------------------------------- evaluation

def evaluate_export(export: dict) -> float:
    """Re-evaluate an exported policy on its embedded problem."""
    try:
        solver, payload, params = export["solver"], export["policy"], export["params"]
        problem = _coerce(build_problem(export["problem"]), SOLVERS[solver].kind, solver)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed policy file: missing {exc}") from None
    kind = payload.get("kind")
    alpha = params.get("alpha")
    if kind == "table":
        pol = Policy(np.asarray(payload["probs"], float))
        if solver == "ev":
            return float(policy_evaluation(problem, pol)[problem.initial_state])
        if solver in ("dynamic-cvar", "oracle-dynamic-cvar"):
            return float(dynamic_cvar_evaluation(problem, pol, float(alpha))[problem.initial_state])
        if solver in ("robust", "oracle-robust"):
            return float(robust_policy_evaluation(problem, pol)[problem.ref.initial_state])
        if solver == "minimax-regret":
            return float(robust_policy_evaluation(problem, pol, cost="regret")[problem.ref.initial_state])
        if solver == "oracle-minimax-regret":
            return evaluate_regret(problem, pol)[1]
    if kind == "augmented":
        return _executed_static_cvar(_augmented_import(problem, payload))
    if kind == "lexicographic":
        base = _augmented_import(problem, payload["base"])
        lex = LexPolicy(base, float(payload["var_star"]),
                        {(t, s, b): a for t, s, b, a in payload["switch"]},
                        {(t, s, b): a for t, s, b, a in payload["constrained"]})
        return lex_return_distribution(lex).mean
    if kind == "options":
        plans = {(t, s): _plan_import(p) for t, s, p in payload["plans"]}
        return robust_option_evaluation(problem, OptionPolicy(int(payload["n"]), plans))
    if kind in ("search", "value"):
        # no standalone policy: replay the recorded deterministic computation
        return _solve(problem, solver, params, export["seed"])[0]
    raise ConfigError(f"cannot evaluate policy kind {kind!r} for solver {solver!r}")


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
