"""Deterministic quadrature rules.

Two rules are used in the package:

* ``adaptive_gk15`` -- globally adaptive 7/15-point Gauss--Kronrod bisection
  for vector-valued integrands on a finite interval. All components share
  nodes, so ratios of integrals see correlated (cancelling) errors.
* ``log_axis_integral`` -- a fixed 256-node Gauss--Legendre rule on a
  log-transformed positive axis, with the window chosen from where the
  log-integrand carries mass. Used for moments of continuous mixing laws.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import QuadratureError

# QUADPACK qk15 abscissae and weights (Kronrod nodes; odd indices are Gauss nodes).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5]] = _WG[:3]
_GW[7] = _WG[3]
_GW[[9, 11, 13]] = _WG[2::-1]


@dataclass(frozen=True)
class QuadResult:
    value: np.ndarray
    error: np.ndarray
    n_intervals: int


def _gk15(f, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = np.atleast_2d(f(mid + half * _NODES))
    kron = half * (vals @ _KW)
    gauss = half * (vals @ _GW)
    return kron, np.abs(kron - gauss)


def adaptive_gk15(
    f: Callable[[np.ndarray], np.ndarray],
    breakpoints,
    *,
    epsabs: float = 0.0,
    epsrel: float = 1e-12,
    limit: int = 4000,
) -> QuadResult:
    """Integrate a vector-valued ``f`` over consecutive ``breakpoints``.

    ``f`` maps an array of nodes to an array of shape ``(ncomp, nnodes)``
    (or ``(nnodes,)`` for scalar integrands). Intervals with the largest
    error are bisected until every component meets
    ``error <= max(epsabs, epsrel * |value|)``.

    Raises:
        QuadratureError: if the tolerance is not met within ``limit`` intervals
            or the integrand is not finite.
    """
    pts = np.asarray(breakpoints, dtype=float)
    if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
        raise ValueError("breakpoints must be strictly increasing with at least two entries")

    heap = []
    total = None
    err_total = None
    counter = 0
    for a, b in zip(pts[:-1], pts[1:]):
        val, err = _gk15(f, a, b)
        total = val.copy() if total is None else total + val
        err_total = err.copy() if err_total is None else err_total + err
        heapq.heappush(heap, (-float(err.max()), counter, a, b, val, err))
        counter += 1

    while True:
        if not (np.all(np.isfinite(total)) and np.all(np.isfinite(err_total))):
            raise QuadratureError("integrand produced non-finite values")
        tol = np.maximum(epsabs, epsrel * np.abs(total))
        if np.all(err_total <= tol):
            break
        if len(heap) >= limit:
            raise QuadratureError(
                f"tolerance not reached with {limit} intervals (error {err_total.max():.3g})")
        _, _, a, b, val, err = heapq.heappop(heap)
        mid = 0.5 * (a + b)
        if not (a < mid < b):
            # interval cannot be split further in floating point
            if np.all(err_total - err <= tol):
                break
            raise QuadratureError("interval collapsed before tolerance was reached")
        total = total - val
        err_total = err_total - err
        for lo, hi in ((a, mid), (mid, b)):
            v, e = _gk15(f, lo, hi)
            total = total + v
            err_total = err_total + e
            heapq.heappush(heap, (-float(e.max()), counter, lo, hi, v, e))
            counter += 1

    # re-sum from the leaves so the result does not depend on update history
    leaves = sorted(heap, key=lambda item: item[2])
    value = np.sum([item[4] for item in leaves], axis=0)
    error = np.sum([item[5] for item in leaves], axis=0)
    return QuadResult(value=value, error=error, n_intervals=len(leaves))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)


def log_axis_integral(log_integrand: Callable[[np.ndarray], np.ndarray],
                      *, scan=(-80.0, 80.0), scan_points: int = 8001,
                      drop: float = 60.0) -> float:
    """Return ``log ∫ exp(log_integrand(y)) dy`` over the real line.

    The integrand is assumed unimodal-ish in ``y`` (for mixing laws ``y`` is
    ``log v``); the window is the region where it is within ``exp(-drop)`` of
    its peak, padded by one scan step on each side.
    """
    y = np.linspace(scan[0], scan[1], scan_points)
    with np.errstate(all="ignore"):
        ly = np.asarray(log_integrand(y), dtype=float)
    ly = np.where(np.isnan(ly), -np.inf, ly)
    peak = np.max(ly)
    if not np.isfinite(peak):
        if peak == np.inf:
            raise QuadratureError("log-integrand is +inf on the scan grid")
        return -np.inf
    keep = np.nonzero(ly > peak - drop)[0]
    step = y[1] - y[0]
    lo = y[keep[0]] - step
    hi = y[keep[-1]] + step
    half = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo) + half * _GL_NODES
    with np.errstate(all="ignore"):
        vals = np.asarray(log_integrand(nodes), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    return float(logsumexp(vals + np.log(_GL_WEIGHTS * half)))
