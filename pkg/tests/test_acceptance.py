"""Exit criteria of the build, one test per criterion.

Each test prints a PASS/FAIL line; pytest repeats them in an
"acceptance criteria" section of the terminal summary. Runtime limits are part
of the pass condition.
"""

import csv
import time

import numpy as np
import pytest

from steinshrink.bayes import BayesPriorSpec, bayes_r, verify_f_independence
from steinshrink.cli import main
from steinshrink.conditions import minimax_a_bound
from steinshrink.config import config_from_dict
from steinshrink.fields import catalogued_fields, divergence, divergence_fd, js_field, baranchik_field
from steinshrink.models import MixingLaw, ModelSpec
from steinshrink.risk import (
    fixed_direction, mc_risk, mc_risk_difference, orthant_domination_check, q_identity_check,
    risk_difference_agreement, sphere_ball_check, stein_identity_check,
    unknown_scale_cross_term_check)
from steinshrink.runner import run
from steinshrink.shrinkage import EstimatorSpec, FaceRule, rational_shrink

pytestmark = pytest.mark.acceptance

SEED = 20240611
N = 100_000
TWO_POINT = MixingLaw.discrete([1.0, 2.0], [0.5, 0.5])


def families(p, k):
    return [ModelSpec.normal(p, k), ModelSpec.student_t(5, p, k), ModelSpec.scale_mixture(TWO_POINT, p, k)]


def test_criterion_01_js_risk_at_origin(criterion):
    t0 = time.perf_counter()
    est = mc_risk(ModelSpec.normal(5), EstimatorSpec.js_known(3.0), N, SEED)
    dt = time.perf_counter() - t0
    ok = abs(est.mean_loss - 2.0) <= 3 * est.std_error and dt < 5
    assert criterion(1, "JS risk at the origin", ok,
                     f"{est.mean_loss:.4f} ± {est.std_error:.4f} vs 2", dt)


def test_criterion_02_identity_risk(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for m in families(6, 4):
        est = mc_risk(m, EstimatorSpec.identity(), N, SEED)
        target = m.p * m.per_coordinate_variance()
        ok &= abs(est.mean_loss - target) <= 3 * est.std_error
        parts.append(f"{m.family} {est.mean_loss:.3f}/{target:.3f}")
    dt = time.perf_counter() - t0
    assert criterion(2, "identity-estimator risk", ok and dt < 10, ", ".join(parts), dt)


def test_criterion_03_distributional_robustness(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for m in families(6, 4):
        rep = mc_risk_difference(m, EstimatorSpec.js_unknown(4.0), EstimatorSpec.identity(), N, SEED)
        ok &= rep.significantly_negative
        parts.append(f"{m.family} z={rep.mean_difference / rep.std_error:.1f}")
    dt = time.perf_counter() - t0
    assert criterion(3, "unknown-scale JS beats X on every family", ok and dt < 30, ", ".join(parts), dt)


def test_criterion_04_unbiased_risk_difference(criterion):
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for m in families(6, 4):
        for norm in (0.0, 2.0, 10.0):
            rep = risk_difference_agreement(m.with_theta(norm * fixed_direction(6)), 4.0, N, SEED)
            ok &= rep.passed
            worst = max(worst, abs(rep.difference) / rep.std_error)
    dt = time.perf_counter() - t0
    assert criterion(4, "unbiased risk difference agrees with paired MC", ok and dt < 120,
                     f"9 cells, worst |z| = {worst:.2f}", dt)


def test_criterion_05_identity_suite(criterion):
    t0 = time.perf_counter()
    n, p, k = 10 ** 6, 5, 3
    theta = np.ones(p)
    fields = [js_field(p - 2), baranchik_field(rational_shrink(p - 2))]
    reports = []
    for m in (ModelSpec.normal(p, k, theta=theta), ModelSpec.student_t(5, p, k, theta=theta)):
        for fld in fields:
            if m.family == "normal":
                reports.append(stein_identity_check(m, fld, n, SEED))
            reports.append(q_identity_check(m, fld, n, SEED))
            reports.append(unknown_scale_cross_term_check(m, fld, n, SEED))
    for fld in fields:
        reports.append(sphere_ball_check(theta, 3.0, fld, p, n, SEED))
    dt = time.perf_counter() - t0
    flat = [r for rep in reports for r in (rep,) + rep.parts]
    worst = max(abs(r.difference) / r.std_error for r in flat if r.std_error > 0)
    ok = all(r.passed for r in reports) and dt < 300
    assert criterion(5, "Stein, Q, sphere/ball and residual identities", ok,
                     f"{len(flat)} checks, worst |z| = {worst:.2f}", dt)


def test_criterion_06_divergence_oracle(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    ok, count = True, 0
    for p in (3, 5, 8):
        d = rng.standard_normal((100, p))
        x = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0.5, 10, 100)[:, None]
        usq = rng.uniform(0.5, 20, 100)
        for fld in catalogued_fields(p):
            s = usq if fld.u_dependent else None
            fd = divergence_fd(fld, x, usq=s)
            ok &= bool(np.all(np.abs(divergence(fld, x, s) - fd) <= np.maximum(1e-6, 1e-4 * np.abs(fd))))
            count += 1
    dt = time.perf_counter() - t0
    assert criterion(6, "analytic vs finite-difference divergence", ok and dt < 1,
                     f"{count} fields x 100 points", dt)


def _random_priors(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        p = int(rng.integers(3, 11))
        k = int(rng.integers(1, 9))
        out.append(BayesPriorSpec(float(rng.uniform(-k / 2, 3.0)), float(rng.uniform(0.2, p - 2)), p, k))
    return out


def test_criterion_07_bayes_r(criterion):
    t0 = time.perf_counter()
    w = np.logspace(-4, 6, 200)
    ok, worst_drop, worst_limit = True, 0.0, 0.0
    for prior in _random_priors(20, SEED):
        r = bayes_r(prior, w)
        drop = float(max(0.0, -np.min(np.diff(r))))
        gap = abs(bayes_r(prior, 1e8) - prior.r_limit)
        ok &= drop <= 1e-10 and np.all(r >= 0) and np.all(r <= prior.r_limit + 1e-8) and gap <= 1e-3
        worst_drop, worst_limit = max(worst_drop, drop), max(worst_limit, gap)
    dt = time.perf_counter() - t0
    assert criterion(7, "r(w) monotone, bounded and convergent", ok and dt < 30,
                     f"20 priors, worst drop {worst_drop:.1e}, worst limit gap {worst_limit:.1e}", dt)


def test_criterion_08_f_independence(criterion):
    t0 = time.perf_counter()
    prior = BayesPriorSpec(0.0, 0.5, 1, 1)
    fams = [ModelSpec.normal(1, 1), ModelSpec.student_t(5, 1, 1)]
    reps = [verify_f_independence(prior, [x], [u], fams) for x, u in ((0.7, 1.3), (2.5, 0.4), (-1.2, 2.0))]
    dt = time.perf_counter() - t0
    spread = max(r.max_discrepancy for r in reps)
    closed = max(r.max_closed_form_discrepancy for r in reps)
    ok = spread <= 1e-4 and closed <= 1e-4 and dt < 60
    assert criterion(8, "posterior mean does not depend on f", ok,
                     f"spread {spread:.1e}, closed-form gap {closed:.1e}", dt)


def test_criterion_09_certificate(criterion, tmp_path):
    t0 = time.perf_counter()
    good = main(["certify-minimax", "-a", "0", "-b", "4", "-p", "6", "-k", "4", "--out", str(tmp_path / "g")])
    bad = main(["certify-minimax", "-a", "0", "-b", "5", "-p", "6", "-k", "4", "--out", str(tmp_path / "b")])
    dt = time.perf_counter() - t0
    with open(tmp_path / "b" / "certify_minimax.csv", newline="") as fh:
        failed = {row["estimator"] for row in csv.DictReader(fh) if row["pass"] == "false"}
    flagged = "b_le_p_minus_2" in failed
    ok = good == 0 and bad == 1 and flagged and dt < 1
    assert criterion(9, "minimaxity certificate", ok,
                     f"exit {good} for b=4, exit {bad} for b=5, b <= p-2 flagged: {flagged}", dt)


def test_criterion_10_orthant_sweep(criterion):
    t0 = time.perf_counter()
    rep = orthant_domination_check(ModelSpec.normal(6, 4), FaceRule(), N, SEED)
    dt = time.perf_counter() - t0
    zs = [r.mean_difference / r.std_error for r in rep.reports]
    ok = rep.passed and rep.reports[0].significantly_negative and dt < 60
    assert criterion(10, "orthant estimator against X+", ok,
                     "z by theta: " + ", ".join(f"{z:.1f}" for z in zs), dt)


def test_criterion_11_minimax_bound(criterion):
    t0 = time.perf_counter()
    exact = minimax_a_bound(ModelSpec.normal(4))
    mc = minimax_a_bound(ModelSpec.normal(4), n_mc=10 ** 6, seed=SEED, method="mc")
    dt = time.perf_counter() - t0
    ok = exact.value == 0.5 and abs(mc.value - 0.5) <= 3 * mc.std_error
    assert criterion(11, "minimax bound for a", ok,
                     f"analytic {exact.value!r}, MC {mc.value:.4f} ± {mc.std_error:.4f}", dt)


def test_criterion_12_determinism(criterion, tmp_path):
    doc = {
        "seed": SEED, "n": N,
        "models": [{"name": "normal5", "family": "normal", "p": 5},
                   {"name": "normal6", "family": "normal", "p": 6, "k": 4},
                   {"name": "t6", "family": "student_t", "degrees_of_freedom": 5, "p": 6, "k": 4},
                   {"name": "mix6", "family": "scale_mixture", "p": 6, "k": 4,
                    "mixing": {"atoms": [1.0, 2.0], "weights": [0.5, 0.5]}}],
        "estimators": [{"name": "id", "variant": "identity"},
                       {"name": "js3", "variant": "js_known", "a": 3},
                       {"name": "js4", "variant": "js_unknown", "a": 4}],
        "checks": [{"operation": "mc_risk", "name": "c1", "model": "normal5", "estimator": "js3"}] + [
            {"operation": "mc_risk_difference", "name": f"c3_{m}", "model": m, "estimator": "js4",
             "baseline": "id"} for m in ("normal6", "t6", "mix6")],
        "output": {"formats": ["csv", "json"], "figures": False},
    }
    cfg = config_from_dict(doc)
    t0 = time.perf_counter()
    run(cfg, tmp_path / "t1", threads=1, echo=None)
    run(cfg, tmp_path / "t4", threads=4, echo=None)
    dt = time.perf_counter() - t0
    names = sorted(p.name for p in (tmp_path / "t1").iterdir() if p.name != "manifest.json")
    same = [n for n in names if (tmp_path / "t1" / n).read_bytes() == (tmp_path / "t4" / n).read_bytes()]
    ok = len(names) > 0 and same == names
    assert criterion(12, "byte-identical tables for 1 and 4 threads", ok,
                     f"{len(same)}/{len(names)} files identical", dt)
