"""Monte Carlo risk lab: risks, paired differences and risk-identity checks.

Every routine draws replicates in fixed blocks (see :mod:`steinshrink.parallel`)
and reduces per-replicate values with correctly rounded sums, so results
depend on ``(model, n, seed)`` only. Loss is the un-normalized squared error
``|delta - theta|^2``.

Identity checks compare the two sides of an expectation identity. When both
sides are averaged over the same draws the reported standard error is that
of the per-replicate difference; when they use separate draws it is the
combined ``sqrt(se_left^2 + se_right^2)``. A check passes when
``|difference| <= 3 * se``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import NonfiniteMomentError
from .fields import VectorField, js_field
from .models import ModelSpec, RadialLaw, SampleBatch, q_function, sample_block
from .parallel import block_generator, block_ranges, check_seed, map_ordered, stable_mean_se
from .shrinkage import EstimatorSpec, FaceRule, _sq, estimate

Z_CRIT = 3.0
MAX_SKIP_FRACTION = 1e-4
DEFAULT_THETA_NORMS = (0.0, 1.0, 2.0, 5.0, 10.0, 100.0)


@dataclass(frozen=True)
class RiskEstimate:
    mean_loss: float
    std_error: float
    n: int
    seed: int
    model: ModelSpec
    estimator: EstimatorSpec

    def row(self, operation: str = "mc_risk") -> dict[str, Any]:
        return _row(operation, self.model.label(), self.estimator.label(), self.n, self.seed,
                    self.mean_loss, self.std_error, None)


@dataclass(frozen=True)
class RiskDifferenceReport:
    """Paired risk difference ``R(estimator) - R(baseline)`` over common draws."""

    mean_difference: float
    std_error: float
    estimator: RiskEstimate
    baseline: RiskEstimate
    common_random_numbers: bool
    seed: int

    @property
    def n(self) -> int:
        return self.estimator.n

    @property
    def significantly_negative(self) -> bool:
        return self.mean_difference < -Z_CRIT * self.std_error

    @property
    def not_significantly_positive(self) -> bool:
        return self.mean_difference <= Z_CRIT * self.std_error

    def row(self, operation: str = "mc_risk_difference") -> dict[str, Any]:
        label = f"{self.estimator.estimator.label()} - {self.baseline.estimator.label()}"
        return _row(operation, self.estimator.model.label(), label, self.n, self.seed,
                    self.mean_difference, self.std_error, self.not_significantly_positive)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a Monte Carlo identity check."""

    operation: str
    left: float
    right: float
    difference: float
    std_error: float
    n: int
    seed: int
    paired: bool
    n_skipped: int = 0
    valid: bool = True
    model: str = ""
    subject: str = ""
    parts: tuple["CheckReport", ...] = field(default=())
    one_sided: bool = False

    @property
    def passed(self) -> bool:
        """``|difference| <= 3 se``, or ``difference <= 3 se`` for one-sided checks."""
        d = self.difference if self.one_sided else abs(self.difference)
        own = self.valid and d <= Z_CRIT * self.std_error
        return own and all(p.passed for p in self.parts)

    def row(self) -> dict[str, Any]:
        return _row(self.operation, self.model, self.subject, self.n, self.seed,
                    self.difference, self.std_error, self.passed)

    def rows(self) -> list[dict[str, Any]]:
        return [self.row()] + [p.row() for p in self.parts]


@dataclass(frozen=True)
class SweepReport:
    operation: str
    thetas: tuple[tuple[float, ...], ...]
    reports: tuple[RiskDifferenceReport, ...]

    @property
    def passed(self) -> bool:
        return all(r.not_significantly_positive for r in self.reports)

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for th, rep in zip(self.thetas, self.reports):
            row = rep.row(self.operation)
            row["theta_norm"] = float(np.linalg.norm(th))
            out.append(row)
        return out


def _row(operation, model, estimator, n, seed, mean, se, passed) -> dict[str, Any]:
    return {"operation": operation, "model": model, "estimator": estimator, "n": int(n),
            "seed": int(seed), "mean": float(mean), "se": float(se),
            "pass": None if passed is None else bool(passed)}


# -- block machinery ----------------------------------------------------------

def _per_replicate(model: ModelSpec, n: int, seed: int, fn: Callable[[SampleBatch], Any],
                   threads: int | None, stream: int = 0) -> list[np.ndarray]:
    """Apply ``fn`` to every block and concatenate each returned column in block order."""
    if int(n) != n or n < 2:
        raise ValueError("n must be an integer >= 2")
    seed = check_seed(seed)
    parts = map_ordered(lambda r: fn(sample_block(model, seed, r[0], r[1], r[2], stream)),
                        block_ranges(int(n)), threads)
    if isinstance(parts[0], tuple):
        return [np.concatenate([p[i] for p in parts]) for i in range(len(parts[0]))]
    return [np.concatenate(parts)]


def _require_second_moment(model: ModelSpec) -> None:
    if not math.isfinite(model.per_coordinate_variance()):
        raise NonfiniteMomentError(f"{model.label()} has no finite second moment")


def _loss(spec: EstimatorSpec, b: SampleBatch, theta: np.ndarray) -> np.ndarray:
    u = b.u if spec.needs_residual else None
    return _sq(estimate(spec, b.x, u) - theta)


# -- risks --------------------------------------------------------------------

def mc_risk(model: ModelSpec, estimator: EstimatorSpec, n: int, seed: int, *,
            threads: int | None = None) -> RiskEstimate:
    """Mean of ``|delta(X, U) - theta|^2`` over ``n`` replicates."""
    _require_second_moment(model)
    theta = model.theta_array
    (loss,) = _per_replicate(model, n, seed, lambda b: _loss(estimator, b, theta), threads)
    mean, se = stable_mean_se(loss)
    return RiskEstimate(mean, se, int(n), int(seed), model, estimator)


def mc_risk_difference(model: ModelSpec, estimator: EstimatorSpec, baseline: EstimatorSpec,
                       n: int, seed: int, *, threads: int | None = None) -> RiskDifferenceReport:
    """Paired difference of losses, both arms evaluated on the same draws."""
    _require_second_moment(model)
    theta = model.theta_array

    def block(b):
        la = _loss(estimator, b, theta)
        lb = la if baseline == estimator else _loss(baseline, b, theta)
        return la, lb

    la, lb = _per_replicate(model, n, seed, block, threads)
    diff_mean, diff_se = stable_mean_se(la - lb)
    arm_a = RiskEstimate(*stable_mean_se(la), int(n), int(seed), model, estimator)
    arm_b = RiskEstimate(*stable_mean_se(lb), int(n), int(seed), model, baseline)
    return RiskDifferenceReport(diff_mean, diff_se, arm_a, arm_b, True, int(seed))


def linear_risk_closed_form(p: int, sigma: float, a: float, theta_norm_sq: float) -> tuple[float, float]:
    """Risk of ``(1 - a) X`` under the normal model and the risk-minimizing ``a``.

    ``R = p (1 - a)^2 sigma^2 + a^2 |theta|^2`` and ``a* = p sigma^2 / (p sigma^2 + |theta|^2)``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    ps2 = p * sigma ** 2
    return ps2 * (1 - a) ** 2 + a ** 2 * theta_norm_sq, ps2 / (ps2 + theta_norm_sq)


def fixed_direction(p: int) -> np.ndarray:
    """The fixed pseudo-random unit vector used by default theta grids."""
    d = np.random.default_rng(20240611 + p).standard_normal(p)
    return d / np.linalg.norm(d)


def risk_sweep(model: ModelSpec, estimators: Sequence[EstimatorSpec], n: int, seed: int, *,
               theta_norms: Sequence[float] = DEFAULT_THETA_NORMS, direction=None,
               threads: int | None = None) -> list[tuple[float, RiskEstimate]]:
    """Risk of every estimator at ``theta = |theta| * direction`` along a norm grid.

    All estimators and all grid points share the same underlying draws.
    """
    d = fixed_direction(model.p) if direction is None else np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    out = []
    for norm in theta_norms:
        m = model.with_theta(float(norm) * d)
        for est in estimators:
            out.append((float(norm), mc_risk(m, est, n, seed, threads=threads)))
    return out


# -- unbiased risk difference -------------------------------------------------

def _skip_mask(fld: VectorField, x: np.ndarray) -> np.ndarray:
    return (_sq(x) == 0) if fld.singular_at_origin else np.zeros(len(x), dtype=bool)


def _skip_valid(n_skipped: int, n: int) -> bool:
    return n_skipped <= MAX_SKIP_FRACTION * n


def unbiased_risk_difference(batch: SampleBatch, fld: VectorField, k: int | None = None) -> CheckReport:
    """Sample mean of ``|u|^4/(k+2)^2 (|g(x)|^2 + 2 div g(x))``.

    This estimates the risk of ``X + |U|^2/(k+2) g(X)`` minus that of X.
    Rows with x = 0 are skipped and counted; the result is flagged invalid if
    more than 0.01% of rows are skipped.
    """
    k = batch.u.shape[1] if k is None else int(k)
    if k < 1:
        raise ValueError("the unbiased risk difference needs k >= 1")
    if fld.u_dependent:
        raise ValueError("the unbiased risk difference is defined for fields that ignore u")
    from .fields import divergence
    skip = _skip_mask(fld, batch.x)
    x = batch.x[~skip]
    usq = batch.usq[~skip]
    vals = usq ** 2 / (k + 2) ** 2 * (fld.norm_sq(x) + 2 * divergence(fld, x))
    mean, se = stable_mean_se(vals) if len(vals) > 1 else (0.0, 0.0)
    n_skip = int(skip.sum())
    return CheckReport("unbiased_risk_difference", mean, 0.0, mean, se, batch.n, batch.seed,
                       True, n_skip, _skip_valid(n_skip, batch.n), batch.model.label(), fld.name)


def unbiased_risk_difference_mc(model: ModelSpec, fld: VectorField, n: int, seed: int, *,
                                stream: int = 0, threads: int | None = None) -> CheckReport:
    """Block-parallel :func:`unbiased_risk_difference` over fresh draws."""
    from .fields import divergence
    k = model.k
    if k < 1:
        raise ValueError("the unbiased risk difference needs k >= 1")

    def block(b):
        skip = _skip_mask(fld, b.x)
        x = b.x[~skip]
        usq = b.usq[~skip]
        return usq ** 2 / (k + 2) ** 2 * (fld.norm_sq(x) + 2 * divergence(fld, x)), skip

    vals, skip = _per_replicate(model, n, seed, block, threads, stream)
    mean, se = stable_mean_se(vals)
    n_skip = int(skip.sum())
    return CheckReport("unbiased_risk_difference", mean, 0.0, mean, se, int(n), int(seed),
                       True, n_skip, _skip_valid(n_skip, n), model.label(), fld.name)


def risk_difference_agreement(model: ModelSpec, a: float, n: int, seed: int, *,
                              threads: int | None = None) -> CheckReport:
    """Compare the unbiased formula with the paired Monte Carlo difference for JS(a).

    The two estimates use independent streams, so the combined SE applies.
    """
    mc = mc_risk_difference(model, EstimatorSpec.js_unknown(a), EstimatorSpec.identity(),
                            n, seed, threads=threads)
    ub = unbiased_risk_difference_mc(model, js_field(a), n, seed, stream=1, threads=threads)
    se = math.hypot(mc.std_error, ub.std_error)
    return CheckReport("risk_difference_agreement", mc.mean_difference, ub.difference,
                       mc.mean_difference - ub.difference, se, int(n), int(seed), False,
                       ub.n_skipped, ub.valid, model.label(), f"js(a={a:g})")


# -- identity checks ----------------------------------------------------------

def _paired_check(operation, model, fld, n, seed, threads, block_fn) -> CheckReport:
    lhs, rhs, skip = _per_replicate(model, n, seed, block_fn, threads)
    mean_l, _ = stable_mean_se(lhs)
    mean_r, _ = stable_mean_se(rhs)
    diff, se = stable_mean_se(lhs - rhs)
    n_skip = int(skip.sum())
    return CheckReport(operation, mean_l, mean_r, diff, se, int(n), int(seed), True, n_skip,
                       _skip_valid(n_skip, n), model.label(), fld.name)


def _x_only(fld: VectorField) -> None:
    if fld.u_dependent:
        raise ValueError(f"{fld.name} depends on |u|^2; this identity is for fields of x alone")


def stein_identity_check(model: ModelSpec, fld: VectorField, n: int, seed: int, *,
                         threads: int | None = None) -> CheckReport:
    """``E[(X - theta)' g(X)] = sigma^2 E[div g(X)]`` under the normal model."""
    if model.family != "normal":
        raise ValueError("Stein's identity check needs the normal family")
    _x_only(fld)
    from .fields import divergence
    theta = model.theta_array
    s2 = model.sigma ** 2

    def block(b):
        skip = _skip_mask(fld, b.x)
        x = b.x[~skip]
        return np.einsum("ij,ij->i", x - theta, fld.value(x)), s2 * divergence(fld, x), skip

    return _paired_check("stein_identity_check", model, fld, n, seed, threads, block)


def q_identity_check(model: ModelSpec, fld: VectorField, n: int, seed: int, *,
                     threads: int | None = None) -> CheckReport:
    """``E[(X - theta)' g(X)] = E[Q(|X - theta|^2) div g(X)]`` with Q of the law of X."""
    _x_only(fld)
    _require_second_moment(model)
    from .fields import divergence
    theta = model.theta_array
    radial = RadialLaw.of(model, joint=False)

    def block(b):
        skip = _skip_mask(fld, b.x)
        x = b.x[~skip]
        q = q_function(radial, _sq(x - theta))
        return np.einsum("ij,ij->i", x - theta, fld.value(x)), q * divergence(fld, x), skip

    return _paired_check("q_identity_check", model, fld, n, seed, threads, block)


def _unit_sphere(gen: np.random.Generator, m: int, p: int) -> np.ndarray:
    z = gen.standard_normal((m, p))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sphere_ball_check(theta, R: float, fld: VectorField, p: int, n: int, seed: int, *,
                      threads: int | None = None) -> CheckReport:
    """Average of ``(x - theta)' g(x)`` on the sphere of radius R about theta
    against ``R^2/p`` times the average of ``div g`` over the ball.

    Sphere and ball points come from separate streams.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    _x_only(fld)
    from .fields import divergence
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (p,))
    seed = check_seed(seed)
    ranges = block_ranges(int(n))

    def sphere(r):
        s = _unit_sphere(block_generator(seed, r[0], 1), r[2] - r[1], p)
        x = theta + R * s
        return np.einsum("ij,ij->i", x - theta, fld.value(x))

    def ball(r):
        gen = block_generator(seed, r[0], 2)
        m = r[2] - r[1]
        s = _unit_sphere(gen, m, p)
        x = theta + R * s * gen.random(m)[:, None] ** (1.0 / p)
        skip = _skip_mask(fld, x)
        return R ** 2 / p * divergence(fld, x[~skip]), skip

    lhs = np.concatenate(map_ordered(sphere, ranges, threads))
    parts = map_ordered(ball, ranges, threads)
    rhs = np.concatenate([q[0] for q in parts])
    n_skip = int(sum(int(q[1].sum()) for q in parts))
    ml, sl = stable_mean_se(lhs)
    mr, sr = stable_mean_se(rhs)
    return CheckReport("sphere_ball_check", ml, mr, ml - mr, math.hypot(sl, sr), int(n), seed,
                       False, n_skip, _skip_valid(n_skip, n),
                       f"sphere/ball,p={p},R={R:g}", fld.name)


def unknown_scale_cross_term_check(model: ModelSpec, fld: VectorField, n: int, seed: int, *,
                                   threads: int | None = None) -> CheckReport:
    """Both residual identities with Q of the joint law in dimension p + k:

    1. ``E[|U|^2 (X - theta)' g] = E[|U|^2 div_x g Q(|X - theta|^2 + |U|^2)]``
    2. ``E[|U|^4 |g|^2] = E[h Q(|X - theta|^2 + |U|^2)]`` with
       ``h = (k + 2) |U|^2 |g|^2 + 2 |U|^4 d/d|U|^2 |g|^2``.

    The returned report is part 1; part 2 is attached in ``parts``.
    """
    k = model.k
    if k < 1:
        raise ValueError("the residual identities need k >= 1")
    from .fields import divergence
    theta = model.theta_array
    radial = RadialLaw.of(model, joint=True)
    s_arg = (lambda s: s) if fld.u_dependent else (lambda s: None)

    def block(b):
        skip = _skip_mask(fld, b.x)
        x = b.x[~skip]
        usq = b.usq[~skip]
        q = q_function(radial, _sq(x - theta) + usq)
        g = fld.value(x, s_arg(usq))
        gsq = _sq(g)
        dg = fld.d_usq(x, usq) if fld.u_dependent else np.zeros(len(x))
        h = (k + 2) * usq * gsq + 2 * usq ** 2 * dg
        return (usq * np.einsum("ij,ij->i", x - theta, g),
                usq * divergence(fld, x, s_arg(usq)) * q,
                usq ** 2 * gsq, h * q, skip)

    l1, r1, l2, r2, skip = _per_replicate(model, n, seed, block, threads)
    n_skip = int(skip.sum())
    valid = _skip_valid(n_skip, n)

    def report(name, lhs, rhs, parts=()):
        d, se = stable_mean_se(lhs - rhs)
        return CheckReport(name, stable_mean_se(lhs)[0], stable_mean_se(rhs)[0], d, se, int(n),
                           int(seed), True, n_skip, valid, model.label(), fld.name, parts)

    part2 = report("unknown_scale_norm_term_check", l2, r2)
    return report("unknown_scale_cross_term_check", l1, r1, (part2,))


# -- orthant and ball spot checks ---------------------------------------------

def orthant_domination_check(model: ModelSpec, face_rule: FaceRule, n: int, seed: int,
                             theta_grid: Sequence[Sequence[float]] | None = None, *,
                             known_scale: bool = False,
                             threads: int | None = None) -> SweepReport:
    """Paired risk of the orthant-restricted estimator minus that of ``X_+``.

    The default grid is ``c * (1, ..., 1)`` for c in {0, 0.5, 2, 10}.
    """
    p = model.p
    if theta_grid is None:
        theta_grid = [[c] * p for c in (0.0, 0.5, 2.0, 10.0)]
    thetas = [tuple(float(v) for v in th) for th in theta_grid]
    for th in thetas:
        if len(th) != p or min(th) < 0:
            raise ValueError("every grid theta must lie in the closed positive orthant of R^p")
    if not known_scale and model.k < 1:
        raise ValueError("the unknown-scale orthant estimator needs k >= 1")
    est = EstimatorSpec.orthant(face_rule, known_scale=known_scale, sigma=model.sigma)
    base = EstimatorSpec.orthant(FaceRule("zero"), known_scale=known_scale, sigma=model.sigma)
    reports = tuple(mc_risk_difference(model.with_theta(th), est, base, n, seed, threads=threads)
                    for th in thetas)
    return SweepReport("orthant_domination_check", tuple(thetas), reports)


def ball_average_spot_check(theta, radii: Sequence[float], n: int, seed: int, *,
                            threads: int | None = None) -> CheckReport:
    """Spot check that ``R^2 E[h(W)]`` is nonincreasing in R for ``h = -1/|x|^2``,
    W uniform on the ball of radius R about theta.

    Every radius reuses the same uniform draws. The report's difference is the
    largest increase between consecutive radii and its SE is that of the
    paired increment.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    if p < 3:
        raise ValueError("the ball average of 1/|x|^2 needs p >= 3")
    radii = np.asarray(radii, dtype=float)
    if radii.size < 2 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("radii must be positive and increasing")
    seed = check_seed(seed)

    def block(r):
        gen = block_generator(seed, r[0], 3)
        m = r[2] - r[1]
        w = _unit_sphere(gen, m, p) * gen.random(m)[:, None] ** (1.0 / p)
        return np.column_stack([-R ** 2 / _sq(theta + R * w) for R in radii])

    vals = np.concatenate(map_ordered(block, block_ranges(int(n)), threads))
    incs = [stable_mean_se(vals[:, i + 1] - vals[:, i]) for i in range(radii.size - 1)]
    worst = max(range(len(incs)), key=lambda i: incs[i][0] - Z_CRIT * incs[i][1])
    d, se = incs[worst]
    return CheckReport("ball_average_spot_check", float(radii[worst]), float(radii[worst + 1]),
                       d, se, int(n), seed, True, 0, True, f"ball,p={p}", "-1/|x|^2",
                       one_sided=True)
