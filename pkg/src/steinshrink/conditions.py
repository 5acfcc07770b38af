"""Domination and minimaxity condition checkers.

The checkers evaluate pointwise sufficient conditions on a grid and report
the worst value. Terms that cancel exactly in real arithmetic (for instance
the James--Stein field at the edge of its admissible range) leave rounding
residue of order 1e-16 times the term magnitudes, so a grid point counts as
nonpositive when its value is at most ``rtol`` times the magnitude of the
terms it was built from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteExpectationError
from .fields import VectorField, divergence
from .models import ModelSpec
from .parallel import map_ordered, block_ranges, stable_mean_se
from .shrinkage import _sq

_RTOL = 1e-12


@dataclass(frozen=True)
class ConditionReport:
    max_value: float
    passed: bool
    strictly_negative: bool
    n_points: int
    worst_point: tuple[float, ...]

    def __bool__(self):
        return self.passed


def radial_grid(p: int, n_radii: int = 40, n_directions: int = 50, r_min: float = 1e-2,
                r_max: float = 1e3, seed: int = 0) -> np.ndarray:
    """Points with |x| log-spaced on [r_min, r_max] along random unit directions."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.logspace(math.log10(r_min), math.log10(r_max), n_radii)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, p)


def _report(values, scale, points) -> ConditionReport:
    slack = _RTOL * scale
    i = int(np.argmax(values - slack))
    return ConditionReport(
        max_value=float(np.max(values)),
        passed=bool(np.all(values <= slack)),
        strictly_negative=bool(np.all(values < -slack)),
        n_points=len(values),
        worst_point=tuple(float(v) for v in np.atleast_1d(points[i])),
    )


def check_domination_condition(fld: VectorField, c: float, grid) -> ConditionReport:
    """Evaluate |g(x)|^2 + 2 c div g(x) on the grid; passes when nowhere positive.

    Sufficient for X + g(X) to dominate X when Q(t) >= c.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    x = np.atleast_2d(np.asarray(grid, dtype=float))
    gsq = fld.norm_sq(x)
    div_term = 2 * c * divergence(fld, x)
    return _report(gsq + div_term, np.abs(gsq) + np.abs(div_term), x)


def check_residual_domination_condition(fld: VectorField, grid, usq_grid, k: int) -> ConditionReport:
    """Evaluate |g|^2 + 2 div_x g + 2 |u|^2/(k+2) d/d|u|^2 |g|^2 over grid x usq_grid.

    Sufficient for X + |U|^2/(k+2) g(X, |U|^2) to dominate X. For a field that
    ignores u the last term vanishes.
    """
    x = np.atleast_2d(np.asarray(grid, dtype=float))
    usq_grid = np.atleast_1d(np.asarray(usq_grid, dtype=float))
    xs = np.repeat(x, len(usq_grid), axis=0)
    ss = np.tile(usq_grid, len(x))
    s_arg = ss if fld.u_dependent else None
    gsq = fld.norm_sq(xs, s_arg)
    div_term = 2 * divergence(fld, xs, s_arg)
    usq_term = 2 * ss / (k + 2) * fld.d_usq(xs, ss) if fld.u_dependent else np.zeros(len(xs))
    values = gsq + div_term + usq_term
    scale = np.abs(gsq) + np.abs(div_term) + np.abs(usq_term)
    points = np.column_stack([xs, ss])
    return _report(values, scale, points)


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    std_error: float
    method: str
    inverse_norm_expectation: float


def minimax_a_bound(model: ModelSpec, n_mc: int = 10**6, seed: int = 0, *,
                    method: str = "auto", threads: int | None = None) -> BoundEstimate:
    """Upper end of the minimax range 0 <= a <= 1 / (p E_0[1/|X|^2]).

    The expectation is taken at theta = 0. For the normal family it is
    ``1 / (sigma^2 (p - 2))``; otherwise (or with ``method="mc"``) it is a
    Monte Carlo mean whose standard error is carried to the bound by the
    delta method.

    Raises:
        InfiniteExpectationError: for p < 3.
        ValueError: for p = 3, where 1/|x|^2 is not superharmonic.
    """
    p = model.p
    if p < 3:
        raise InfiniteExpectationError(f"E_0[1/|X|^2] is infinite for p = {p}")
    if p < 4:
        raise ValueError("the minimax bound needs p >= 4")
    if method not in ("auto", "analytic", "mc"):
        raise ValueError("method must be auto, analytic or mc")
    if method == "analytic" and model.family != "normal":
        raise ValueError("the analytic path is only available for the normal family")
    if method in ("auto", "analytic") and model.family == "normal":
        expect = 1.0 / (model.sigma ** 2 * (p - 2))
        return BoundEstimate(1.0 / (p * expect), 0.0, "analytic", expect)

    from .models import sample_block
    centred = model.with_theta([0.0] * p)

    def block(r):
        b = sample_block(centred, seed, r[0], r[1], r[2])
        return 1.0 / _sq(b.x)

    inv = np.concatenate(map_ordered(block, block_ranges(int(n_mc)), threads))
    mean, se = stable_mean_se(inv)
    value = 1.0 / (p * mean)
    return BoundEstimate(value, se / (p * mean ** 2), "mc", mean)


def discrete_laplacian(h, x, step: float = 1e-3) -> np.ndarray:
    """Sum of second central differences of a scalar function ``h`` at the rows of ``x``."""
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    p = x2.shape[1]
    centre = h(x2)
    total = np.zeros(len(x2))
    for i in range(p):
        e = np.zeros(p)
        e[i] = step
        total += (h(x2 + e) - 2 * centre + h(x2 - e)) / step ** 2
    return total


def inverse_square_norm(x: np.ndarray) -> np.ndarray:
    return 1.0 / _sq(np.atleast_2d(x))
