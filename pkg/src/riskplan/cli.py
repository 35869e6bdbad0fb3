"""Command-line experiment runner.

    riskplan solve --problem fig22-chain --solver static-cvar --alpha 0.5
    riskplan sweep --config sweep.json --jobs 4 --out results/
    riskplan eval-policy results/policy.json
    riskplan verify --problem regret-bandit --solver minimax-regret --param stochastic=true oracle grid .01
    riskplan list-domains

Exit status: 0 success, 2 bad config, 3 invalid problem, 4 enumeration cap
exceeded, 5 oracle mismatch, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import domains
from .experiment import (
    COLUMNS,
    ConfigError,
    error_row,
    evaluate_export,
    exit_code,
    resolve_config,
    run,
    run_sweep,
    write_json,
)

log = logging.getLogger("riskplan")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _param(text: str) -> tuple[str, object]:
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key, _parse_value(val)


def _add_run_options(p: argparse.ArgumentParser, verify_default: bool = False) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--problem", help="domain name (overrides the config's problem)")
    p.add_argument("--domain-param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="domain parameter, repeatable")
    p.add_argument("--solver", help="solver name (overrides the config's solver)")
    p.add_argument("--alpha", type=float, help="CVaR level")
    p.add_argument("--n", type=int, help="option length")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="solver parameter, repeatable")
    p.add_argument("--seed", type=int, help="base seed (default: config seed or 0)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--timing", action="store_true", help="fill wall_ms (makes the CSV run-dependent)")
    if verify_default:
        p.add_argument("verify", nargs="*", default=[], metavar="ORACLE_ARG",
                       help="oracle options, e.g. 'oracle grid .01' or 'tol 1e-6'")
    else:
        p.add_argument("--verify", nargs="*", metavar="ORACLE_ARG",
                       help="check against the solver's oracle, e.g. --verify oracle grid .01")


def _load_config(args) -> dict:
    raw: dict = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {str(args.config)!r}: {exc}") from None
    if args.problem is not None:
        raw["problem"] = {"domain": args.problem, "params": {}}
    if args.domain_param:
        problem = raw.get("problem")
        if isinstance(problem, str):
            problem = raw["problem"] = {"domain": problem, "params": {}}
        if not isinstance(problem, dict) or "domain" not in problem:
            raise ConfigError("--domain-param needs a domain problem")
        problem.setdefault("params", {}).update(dict(args.domain_param))
    if args.solver is not None:
        raw["solver"] = args.solver
    params = raw.setdefault("params", {})
    if args.alpha is not None:
        params["alpha"] = args.alpha
    if args.n is not None:
        params["n"] = args.n
    params.update(dict(args.param))
    verify = getattr(args, "verify", None)
    if verify is not None:
        raw["verify"] = verify if verify else True
    return resolve_config(raw, seed=args.seed)


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_solve(args) -> int:
    config = _load_config(args)
    if config.get("sweep"):
        raise ConfigError("config has a sweep grid; use the sweep subcommand")
    out: Path = args.out
    write_json(out / "config.json", config)
    try:
        row, export = run(config, timing=args.timing)
    except Exception as exc:
        _write_csv(out / "results.csv", [getattr(exc, "row", None) or error_row(config, exc)])
        if hasattr(exc, "export"):
            write_json(out / "policy.json", exc.export)
        raise
    _write_csv(out / "results.csv", [row])
    write_json(out / "policy.json", export)
    writer = csv.DictWriter(sys.stdout, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    out: Path = args.out
    write_json(out / "config.json", config)
    results = run_sweep(config, jobs=args.jobs, timing=args.timing)
    for i, (_, export) in enumerate(results):
        if export is not None:
            write_json(out / "policies" / f"cell-{i:04d}.json", export)
    rows = [row for row, _ in results]
    _write_csv(out / "results.csv", rows)
    failed = sum(row["status"] not in ("ok", "verified") for row in rows)
    print(f"{len(rows)} cells, {failed} failed; wrote {out / 'results.csv'}")
    return 0


def cmd_eval_policy(args) -> int:
    try:
        export = json.loads(args.policy.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read policy file {str(args.policy)!r}: {exc}") from None
    value = evaluate_export(export)
    print(json.dumps({"solver": export.get("solver"), "reported": export.get("value"), "value": value}))
    return 0


def cmd_list_domains(args) -> int:
    for name, summary in domains.list_domains().items():
        defaults = domains.domain_defaults(name)
        extra = f"  {json.dumps(defaults)}" if defaults else ""
        print(f"{name}: {summary}{extra}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskplan", description="Risk-sensitive and robust tabular planning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one solver on one problem")
    _add_run_options(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a parameter grid, one CSV row per cell")
    _add_run_options(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="solve and compare with the solver's oracle")
    _add_run_options(p, verify_default=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval-policy", help="re-evaluate an exported policy file")
    p.add_argument("policy", type=Path)
    p.set_defaults(func=cmd_eval_policy)

    p = sub.add_parser("list-domains", help="list built-in problems")
    p.set_defaults(func=cmd_list_domains)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to a category exit code
        code = exit_code(exc)
        print(f"error ({code}): {exc}", file=sys.stderr)
        if args.verbose:
            log.exception("details")
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
