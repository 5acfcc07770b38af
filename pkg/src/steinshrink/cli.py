"""Command line front end.

Every subcommand builds an :class:`ExperimentConfig` (from ``--config`` plus
overrides) and hands it to :func:`steinshrink.runner.run`.

Exit status: 0 when every check passes, 1 when any check fails, 2 for usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any, Sequence

import yaml

from .errors import ConfigError
from .config import config_from_dict, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors raise instead of exiting."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, spec_overrides: bool = True) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--n", type=int, help="override the replicate count")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--out", help="output directory (beats STEINSHRINK_OUTPUT_DIR and the config)")
    if spec_overrides:
        p.add_argument("--model", action="append", default=[],
                       help="model: a name from the config or an inline YAML mapping (repeatable)")
        p.add_argument("--estimator", action="append", default=[],
                       help="estimator: a name from the config or an inline YAML mapping (repeatable)")


def _prior_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-a", type=float, required=True, help="prior exponent of eta")
    p.add_argument("-b", type=float, required=True, help="prior exponent of |theta|")
    p.add_argument("-p", type=int, required=True, help="dimension of X")
    p.add_argument("-k", type=int, required=True, help="dimension of U")
    p.add_argument("--w-min", type=float, default=1e-3)
    p.add_argument("--w-max", type=float, default=1e6)
    p.add_argument("--w-num", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steinshrink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="run every check in a config"), spec_overrides=False)
    _common(sub.add_parser("simulate-risk", help="Monte Carlo risk of each model/estimator pair"))
    p = sub.add_parser("risk-sweep", help="risk along a theta-norm grid")
    _common(p)
    p.add_argument("--theta-norms", type=float, nargs="+", help="norms along the fixed direction")
    p = sub.add_parser("verify-identities", help="Stein, Q, sphere/ball and residual identities")
    _common(p)
    p.add_argument("--field", action="append", default=[],
                   help="inline YAML field, e.g. '{kind: js}' (default: js and rational baranchik)")
    p = sub.add_parser("bayes-r-table", help="tabulate the generalized Bayes r(w)")
    _common(p, spec_overrides=False)
    _prior_args(p)
    p = sub.add_parser("certify-minimax", help="clause-by-clause minimaxity certificate")
    _common(p, spec_overrides=False)
    _prior_args(p)
    p = sub.add_parser("orthant-sweep", help="orthant-restricted estimator against X_+")
    _common(p)
    p.add_argument("--face-rule", default="{kind: constant_face, scale: 1.0}",
                   help="inline YAML face rule")
    p.add_argument("--known-scale", action="store_true")
    return parser


def _inline(text: str, what: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"--{what}: invalid YAML ({exc})"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"--{what}: expected a mapping, got {text!r}"])
    return data


def _select(entries: list[dict], picks: list[str], what: str) -> list[dict]:
    """Resolve --model/--estimator picks against config entries or inline mappings."""
    if not picks:
        return entries
    by_name = {e["name"]: e for e in entries}
    out = []
    for i, pick in enumerate(picks):
        if pick in by_name:
            out.append(by_name[pick])
        else:
            spec = _inline(pick, what)
            spec.setdefault("name", f"{what}{i}")
            out.append(spec)
    return out


def _base_document(args) -> dict[str, Any]:
    if args.config:
        doc = load_config(args.config).to_dict()
    else:
        doc = {"models": [], "estimators": [], "checks": []}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.n is not None:
        doc["n"] = args.n
    return doc


def _compatible(model: dict, est: dict) -> bool:
    needs_u = est.get("variant") in ("js_unknown", "baranchik_unknown", "generalized_bayes") or (
        est.get("variant") == "orthant_restricted" and not est.get("known_scale", False))
    return not needs_u or int(model.get("k", 0)) >= 1


def _document(args) -> dict[str, Any]:
    doc = _base_document(args)
    cmd = args.command
    if cmd == "run":
        return doc
    if cmd in ("bayes-r-table", "certify-minimax"):
        prior = {"a_prior": args.a, "b_prior": args.b, "p": args.p, "k": args.k}
        grid = {"min": args.w_min, "max": args.w_max, "num": args.w_num}
        op = "bayes_r_table" if cmd == "bayes-r-table" else "certify_minimax"
        check = {"operation": op, "name": op, "prior": prior, "w_grid": grid}
        if op == "certify_minimax":
            check["w_grid"] = {"min": args.w_min, "max": args.w_max, "num": min(args.w_num, 121)}
        doc["checks"] = [check]
        return doc

    models = _select(doc.get("models", []), args.model, "model")
    ests = _select(doc.get("estimators", []), args.estimator, "estimator")
    if not models:
        raise ConfigError(["no models: pass --model or a --config with models"])
    doc["models"], doc["estimators"] = models, ests
    checks = []
    if cmd == "simulate-risk":
        if not ests:
            raise ConfigError(["no estimators: pass --estimator or a --config with estimators"])
        for m in models:
            for e in ests:
                if _compatible(m, e):
                    checks.append({"operation": "mc_risk", "name": f"risk_{m['name']}_{e['name']}",
                                   "model": m["name"], "estimator": e["name"]})
    elif cmd == "risk-sweep":
        if not ests:
            raise ConfigError(["no estimators: pass --estimator or a --config with estimators"])
        if args.theta_norms:
            doc["theta_grid"] = {"norms": args.theta_norms, "direction": "fixed"}
        for m in models:
            names = [e["name"] for e in ests if _compatible(m, e)]
            checks.append({"operation": "risk_sweep", "name": f"sweep_{m['name']}",
                           "model": m["name"], "estimators": names})
    elif cmd == "verify-identities":
        checks = _identity_checks(models, [_inline(f, "field") for f in args.field])
    elif cmd == "orthant-sweep":
        face = _inline(args.face_rule, "face-rule")
        for m in models:
            checks.append({"operation": "orthant_domination_check", "name": f"orthant_{m['name']}",
                           "model": m["name"], "face_rule": face, "known_scale": args.known_scale})
    doc["checks"] = checks
    return doc


def _identity_checks(models: list[dict], fields: list[dict]) -> list[dict]:
    checks = []
    for m in models:
        p = int(m["p"])
        flds = fields or [{"kind": "js", "a": p - 2},
                          {"kind": "baranchik", "shrink": {"kind": "rational", "bound": p - 2}}]
        theta = m.get("theta") or [0.0] * p
        for j, f in enumerate(flds):
            tag = f"{m['name']}_{f.get('kind', 'field')}{j}"
            if m.get("family") == "normal":
                checks.append({"operation": "stein_identity_check", "name": f"stein_{tag}",
                               "model": m["name"], "field": f})
            checks.append({"operation": "q_identity_check", "name": f"q_{tag}",
                           "model": m["name"], "field": f})
            if int(m.get("k", 0)) >= 1:
                checks.append({"operation": "unknown_scale_cross_term_check",
                               "name": f"residual_{tag}", "model": m["name"], "field": f})
            checks.append({"operation": "sphere_ball_check", "name": f"sphere_ball_{tag}",
                           "field": f, "p": p, "R": 3.0, "theta": list(theta)})
    return checks


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.threads is not None and args.threads < 1:
        print("steinshrink: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = config_from_dict(_document(args))
    except ConfigError as exc:
        print("steinshrink: configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_USAGE

    from .runner import resolve_output_dir, run
    manifest = run(config, args.out, args.threads)
    print(f"outputs written to {resolve_output_dir(config, args.out)}")
    return EXIT_OK if manifest.all_passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
