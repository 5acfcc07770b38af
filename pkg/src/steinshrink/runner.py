"""Execute an :class:`ExperimentConfig` and persist its result tables.

Every check produces rows with the columns ``operation, model, estimator, n,
seed, mean, se, pass`` (plus check-specific extras). Rows are written to
``<name>.csv`` and ``<name>.json``; sweeps and r(w) tables also get a PNG
figure. ``results.csv``/``results.json`` collect all rows and
``manifest.json`` records the config hash, output paths and wall-clock
timings. Only the manifest contains timings, so everything else is
byte-identical across reruns of the same config and seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .bayes import BayesPriorSpec, RwTable, minimaxity_certificate, verify_f_independence
from .conditions import minimax_a_bound
from .config import DEFAULT_W_GRID, CheckSpec, ExperimentConfig, RunManifest, ThetaGrid
from .fields import field_from_dict
from .models import ModelSpec
from .shrinkage import EstimatorSpec, FaceRule
from . import plotting, risk

BASE_COLUMNS = ("operation", "model", "estimator", "n", "seed", "mean", "se", "pass")
OUTPUT_ENV = "STEINSHRINK_OUTPUT_DIR"


@dataclass
class CheckOutcome:
    rows: list[dict[str, Any]]
    passed: bool | None
    summary: str
    text: str = ""
    tables: dict[str, Callable[[Path], None]] = field(default_factory=dict)
    figures: dict[str, Callable[[Path], str]] = field(default_factory=dict)


def _prior_label(pr: BayesPriorSpec) -> str:
    return f"prior(p={pr.p},k={pr.k},a={pr.a_prior:g},b={pr.b_prior:g})"


def _mark(passed: bool | None) -> str:
    return {True: "PASS", False: "FAIL", None: "INFO"}[passed]


def _w_grid(prm) -> np.ndarray:
    g = {**DEFAULT_W_GRID, **(prm.get("w_grid") or {})}
    return np.logspace(math.log10(float(g["min"])), math.log10(float(g["max"])), int(g["num"]))


class Runner:
    def __init__(self, config: ExperimentConfig, threads: int | None = None):
        self.config = config
        self.threads = threads if threads is not None else config.threads

    def model(self, prm) -> ModelSpec:
        return self.config.models[prm["model"]]

    def estimator(self, name) -> EstimatorSpec:
        return self.config.estimators[name]

    def theta_grid(self, prm, p) -> list[np.ndarray]:
        if "theta_grid" in prm:
            return ThetaGrid.from_dict(prm["theta_grid"]).resolve(p)
        if self.config.theta_grid is not None:
            return self.config.theta_grid.resolve(p)
        return ThetaGrid(norms=risk.DEFAULT_THETA_NORMS).resolve(p)

    def execute(self, check: CheckSpec) -> CheckOutcome:
        handler = getattr(self, "_" + check.operation)
        return handler(check, check.params, self.config.check_n(check), self.config.check_seed(check))

    # -- handlers -------------------------------------------------------------

    def _mc_risk(self, c, prm, n, seed):
        est = risk.mc_risk(self.model(prm), self.estimator(prm["estimator"]), n, seed,
                           threads=self.threads)
        return CheckOutcome([est.row()], None, f"risk {est.mean_loss:.6g} +- {est.std_error:.3g}")

    def _mc_risk_difference(self, c, prm, n, seed):
        base = self.estimator(prm["baseline"]) if "baseline" in prm else EstimatorSpec.identity()
        rep = risk.mc_risk_difference(self.model(prm), self.estimator(prm["estimator"]), base,
                                      n, seed, threads=self.threads)
        return CheckOutcome([rep.row()], rep.not_significantly_positive,
                            f"difference {rep.mean_difference:.6g} +- {rep.std_error:.3g}")

    def _risk_sweep(self, c, prm, n, seed):
        model = self.model(prm)
        ests = [self.estimator(e) for e in prm["estimators"]]
        rows = []
        for th in self.theta_grid(prm, model.p):
            m = model.with_theta(th)
            for est in ests:
                row = risk.mc_risk(m, est, n, seed, threads=self.threads).row("risk_sweep")
                row["model"] = model.label()
                row["theta_norm"] = float(np.linalg.norm(th))
                rows.append(row)
        fig = {f"{c.name}.png": lambda path: plotting.plot_risk_sweep(rows, path, model.label())}
        return CheckOutcome(rows, None, f"{len(rows)} grid points", figures=fig)

    def _linear_risk_closed_form(self, c, prm, n, seed):
        p, a, t = int(prm["p"]), float(prm["a"]), float(prm["theta_norm_sq"])
        sigma = float(prm.get("sigma", 1.0))
        value, a_opt = risk.linear_risk_closed_form(p, sigma, a, t)
        row = risk._row("linear_risk_closed_form", f"normal,p={p},sigma={sigma:g}",
                        f"linear(a={a:g})", 0, 0, value, 0.0, None)
        row["theta_norm_sq"] = t
        row["optimal_a"] = a_opt
        return CheckOutcome([row], None, f"risk {value:.6g}, optimal a {a_opt:.6g}")

    def _field(self, prm, model=None):
        p = model.p if model is not None else prm.get("p")
        k = model.k if model is not None else None
        return field_from_dict(prm["field"], p, k)

    def _unbiased_risk_difference(self, c, prm, n, seed):
        model = self.model(prm)
        rep = risk.unbiased_risk_difference_mc(model, self._field(prm, model), n, seed,
                                               threads=self.threads)
        row = risk._row(rep.operation, rep.model, rep.subject, rep.n, rep.seed, rep.difference,
                        rep.std_error, rep.valid)
        row["n_skipped"] = rep.n_skipped
        return CheckOutcome([row], rep.valid, f"estimate {rep.difference:.6g} +- {rep.std_error:.3g}")

    def _identity(self, rep) -> CheckOutcome:
        rows = rep.rows()
        for row, r in zip(rows, (rep,) + rep.parts):
            row["left"], row["right"], row["n_skipped"] = r.left, r.right, r.n_skipped
        return CheckOutcome(rows, rep.passed, f"difference {rep.difference:.4g} +- {rep.std_error:.3g}")

    def _risk_difference_agreement(self, c, prm, n, seed):
        model = self.model(prm)
        a = float(prm.get("a", model.p - 2))
        return self._identity(risk.risk_difference_agreement(model, a, n, seed, threads=self.threads))

    def _stein_identity_check(self, c, prm, n, seed):
        model = self.model(prm)
        return self._identity(risk.stein_identity_check(model, self._field(prm, model), n, seed,
                                                        threads=self.threads))

    def _q_identity_check(self, c, prm, n, seed):
        model = self.model(prm)
        return self._identity(risk.q_identity_check(model, self._field(prm, model), n, seed,
                                                    threads=self.threads))

    def _unknown_scale_cross_term_check(self, c, prm, n, seed):
        model = self.model(prm)
        return self._identity(risk.unknown_scale_cross_term_check(
            model, self._field(prm, model), n, seed, threads=self.threads))

    def _sphere_ball_check(self, c, prm, n, seed):
        p = int(prm["p"])
        theta = np.broadcast_to(np.asarray(prm.get("theta", 0.0), dtype=float), (p,))
        return self._identity(risk.sphere_ball_check(theta, float(prm["R"]), self._field(prm), p,
                                                     n, seed, threads=self.threads))

    def _ball_average_spot_check(self, c, prm, n, seed):
        return self._identity(risk.ball_average_spot_check(prm["theta"], prm["radii"], n, seed,
                                                           threads=self.threads))

    def _orthant_domination_check(self, c, prm, n, seed):
        model = self.model(prm)
        if "theta_grid" in prm:
            grid = ThetaGrid.from_dict(prm["theta_grid"]).resolve(model.p)
        else:
            grid = None
        sweep = risk.orthant_domination_check(
            model, FaceRule.from_dict(prm.get("face_rule") or {}), n, seed, grid,
            known_scale=bool(prm.get("known_scale", False)), threads=self.threads)
        rows = sweep.rows()
        fig = {f"{c.name}.png": lambda path: plotting.plot_orthant_sweep(rows, path, model.label())}
        at_origin = [r for r, th in zip(sweep.reports, sweep.thetas) if not any(th)]
        strict = ", strict at 0" if at_origin and at_origin[0].significantly_negative else ""
        return CheckOutcome(rows, sweep.passed, f"{len(rows)} grid points{strict}", figures=fig)

    def _minimax_a_bound(self, c, prm, n, seed):
        model = self.model(prm)
        method = prm.get("method", "auto")
        est = minimax_a_bound(model, n, seed, method=method, threads=self.threads)
        passed = None
        if est.method == "mc" and model.family == "normal":
            exact = (model.p - 2) * model.sigma ** 2 / model.p
            passed = abs(est.value - exact) <= risk.Z_CRIT * est.std_error
        row = risk._row("minimax_a_bound", model.label(), est.method, n if est.method == "mc" else 0,
                        seed, est.value, est.std_error, passed)
        row["inverse_norm_expectation"] = est.inverse_norm_expectation
        return CheckOutcome([row], passed, f"a bound {est.value:.6g} ({est.method})")

    def _bayes_r_table(self, c, prm, n, seed):
        prior = BayesPriorSpec.from_dict(prm["prior"])
        table = RwTable.build(prior, _w_grid(prm))
        lim = prior.r_limit if prior.k + 2 * prior.a_prior + 2 > 0 else math.inf
        rmax = float(table.r.max())
        passed = table.is_monotone(1e-10) and rmax <= lim + 1e-8
        row = risk._row("bayes_r_table", _prior_label(prior), "r(w)", len(table.w), 0, rmax,
                        float(table.error.max()), passed)
        row["r_limit"] = lim
        return CheckOutcome(
            [row], passed, f"max r {rmax:.6g}, limit {lim:.6g}",
            tables={f"{c.name}_rw.csv": table.write_csv},
            figures={f"{c.name}.png": lambda path: plotting.plot_rw_table(
                table.w, table.r, lim, path, _prior_label(prior))})

    def _certify_minimax(self, c, prm, n, seed):
        prior = BayesPriorSpec.from_dict(prm["prior"])
        grid = _w_grid(prm) if "w_grid" in prm else None
        rep = minimaxity_certificate(prior, grid)
        rows = []
        for clause in rep.clauses:
            row = risk._row("certify_minimax", _prior_label(prior), clause.name, 0, 0, math.nan,
                            math.nan, clause.passed)
            row["detail"] = clause.detail
            rows.append(row)
        failed = rep.failed()
        summary = "all clauses hold" if rep.passed else "failed: " + ", ".join(failed)
        return CheckOutcome(rows, rep.passed, summary, text=rep.format())

    def _f_independence(self, c, prm, n, seed):
        prior = BayesPriorSpec.from_dict(prm["prior"])
        fams = [ModelSpec.from_dict({"p": prior.p, "k": prior.k, **f}) for f in prm["families"]]
        tol = float(prm.get("tol", 1e-4))
        rows, ok = [], True
        for pt in prm["points"]:
            rep = verify_f_independence(prior, pt["x"], pt["u"], fams, tol)
            row = risk._row("f_independence", _prior_label(prior),
                            "|".join(f.label() for f in fams), 0, 0, rep.max_discrepancy,
                            rep.max_closed_form_discrepancy, rep.passed)
            row["x"] = json.dumps(list(pt["x"]))
            row["u"] = json.dumps(list(pt["u"]))
            rows.append(row)
            ok = ok and rep.passed
        return CheckOutcome(rows, ok, f"{len(rows)} points")


# -- writing ------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows: list[dict[str, Any]]) -> str:
    cols = list(BASE_COLUMNS)
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row.get(k)) for k in cols])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def rows_to_json(payload: dict[str, Any]) -> str:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [clean(v) for v in obj]
        return _json_safe(obj)
    return json.dumps(clean(payload), indent=2, allow_nan=False) + "\n"


def resolve_output_dir(config: ExperimentConfig, override: str | None = None) -> Path:
    """``--out`` beats the environment variable, which beats the config."""
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else Path(config.output.directory)


def run(config: ExperimentConfig, out_dir=None, threads: int | None = None,
        echo: Callable[[str], None] | None = print) -> RunManifest:
    """Run every check, write all outputs, and return the manifest.

    A check that raises is recorded as failed with its error message; the
    remaining checks still run.
    """
    out = resolve_output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = Runner(config, threads)
    manifest = RunManifest(config.digest(), config.seed, __version__)
    (out / "config.yaml").write_text(config.dump())
    all_rows: list[dict[str, Any]] = []
    fmts = config.output.formats
    for check in config.checks:
        t0 = time.perf_counter()
        try:
            outcome = runner.execute(check)
        except Exception as exc:
            msg = f"{type(exc).__name__}: {exc}"
            manifest.errors[check.name] = msg
            row = risk._row(check.operation, "", "", config.check_n(check),
                            config.check_seed(check), math.nan, math.nan, False)
            row["error"] = msg
            outcome = CheckOutcome([row], False, msg)
        manifest.timings[check.name] = round(time.perf_counter() - t0, 6)
        manifest.passed[check.name] = outcome.passed
        paths = []
        for row in outcome.rows:
            row.setdefault("check", check.name)
        if "csv" in fmts:
            path = out / f"{check.name}.csv"
            path.write_text(rows_to_csv(outcome.rows))
            paths.append(str(path))
        if "json" in fmts:
            path = out / f"{check.name}.json"
            path.write_text(rows_to_json({"check": check.name, "operation": check.operation,
                                          "pass": outcome.passed, "rows": outcome.rows}))
            paths.append(str(path))
        for fname, writer in outcome.tables.items():
            writer(out / fname)
            paths.append(str(out / fname))
        if config.output.figures:
            for fname, draw in outcome.figures.items():
                paths.append(draw(out / fname))
        manifest.outputs[check.name] = paths
        all_rows.extend(outcome.rows)
        if echo is not None:
            echo(f"[{_mark(outcome.passed)}] {check.name} ({check.operation}): {outcome.summary}")
            if outcome.text:
                echo(outcome.text)
    if "csv" in fmts:
        (out / "results.csv").write_text(rows_to_csv(all_rows))
    if "json" in fmts:
        (out / "results.json").write_text(rows_to_json({"seed": config.seed, "rows": all_rows}))
    (out / "manifest.json").write_text(rows_to_json(manifest.to_dict()))
    return manifest
