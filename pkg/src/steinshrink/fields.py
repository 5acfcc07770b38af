"""Vector fields g for estimators of the form X + c g(X) and their divergences.

A field may depend on the residual through ``usq = |u|^2``; such fields also
supply ``d/d|u|^2 |g|^2``. Every analytic divergence here is checked against
the central-difference oracle :func:`divergence_fd` in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .shrinkage import ShrinkFn, _rows, _sq


class SingularPointError(ValueError):
    """The field or its divergence is undefined at the requested point (x = 0)."""


Fn = Callable[[np.ndarray, np.ndarray | None], np.ndarray]


@dataclass(frozen=True)
class VectorField:
    """A field ``g(x, |u|^2)`` with analytic x-divergence.

    ``g``, ``div_x`` and ``d_usq_norm_sq`` all take ``(x, usq)`` with ``x`` of
    shape ``(n, p)`` and ``usq`` of shape ``(n,)`` or ``None``.
    """

    name: str
    g: Fn = field(repr=False)
    div_x: Fn = field(repr=False)
    d_usq_norm_sq: Fn | None = field(default=None, repr=False)
    u_dependent: bool = False
    singular_at_origin: bool = False
    params: tuple = ()

    def value(self, x, usq=None) -> np.ndarray:
        x2, _, single = _rows(x)
        usq2 = _usq_rows(usq, len(x2), self.u_dependent)
        out = self.g(x2, usq2)
        return out[0] if single else out

    def norm_sq(self, x, usq=None) -> np.ndarray:
        x2, _, single = _rows(x)
        out = _sq(self.g(x2, _usq_rows(usq, len(x2), self.u_dependent)))
        return out[0] if single else out

    def d_usq(self, x, usq=None) -> np.ndarray:
        x2, _, single = _rows(x)
        if self.d_usq_norm_sq is None:
            out = np.zeros(len(x2))
        else:
            out = self.d_usq_norm_sq(x2, _usq_rows(usq, len(x2), True))
        return out[0] if single else out

    def with_divergence_scaled(self, factor: float) -> "VectorField":
        """A copy whose claimed divergence is off by ``factor`` (harness sensitivity checks)."""
        div = self.div_x
        return VectorField(f"{self.name}*div{factor:g}", self.g,
                           lambda x, s: factor * div(x, s), self.d_usq_norm_sq,
                           self.u_dependent, self.singular_at_origin, self.params)


def _usq_rows(usq, n, required):
    if usq is None:
        if required:
            raise ValueError("this field depends on |u|^2; pass usq")
        return None
    usq = np.broadcast_to(np.asarray(usq, dtype=float), (n,))
    return usq


def divergence(fld: VectorField, x, usq=None):
    """Analytic divergence of ``g`` in x.

    Raises:
        SingularPointError: at x = 0 for fields singular at the origin.
    """
    x2, _, single = _rows(x)
    if fld.singular_at_origin and np.any(_sq(x2) == 0):
        raise SingularPointError(f"{fld.name} is singular at x = 0")
    out = fld.div_x(x2, _usq_rows(usq, len(x2), fld.u_dependent))
    return float(out[0]) if single else out


def divergence_fd(fld: VectorField, x, step: float = 1e-5, usq=None):
    """Central-difference divergence sum_i (g_i(x + h e_i) - g_i(x - h e_i)) / 2h."""
    if not step > 0:
        raise ValueError("step must be positive")
    x2, _, single = _rows(x)
    usq2 = _usq_rows(usq, len(x2), fld.u_dependent)
    p = x2.shape[1]
    total = np.zeros(len(x2))
    for i in range(p):
        e = np.zeros(p)
        e[i] = step
        total += (fld.g(x2 + e, usq2)[:, i] - fld.g(x2 - e, usq2)[:, i]) / (2 * step)
    return float(total[0]) if single else total


def d_usq_fd(fld: VectorField, x, usq, step: float = 1e-6):
    """Central difference of |g|^2 in |u|^2 (relative step)."""
    x2, _, single = _rows(x)
    usq2 = _usq_rows(usq, len(x2), True)
    h = step * np.maximum(usq2, 1.0)
    out = (_sq(fld.g(x2, usq2 + h)) - _sq(fld.g(x2, usq2 - h))) / (2 * h)
    return float(out[0]) if single else out


# -- catalogue ----------------------------------------------------------------

def js_field(a: float) -> VectorField:
    """g(x) = -a x / |x|^2, divergence -a (p - 2) / |x|^2."""
    a = float(a)
    return VectorField(
        "js", g=lambda x, s: -a * x / _sq(x)[:, None],
        div_x=lambda x, s: -a * (x.shape[1] - 2) / _sq(x),
        singular_at_origin=True, params=(a,))


def baranchik_field(shrink: ShrinkFn, a: float = 1.0) -> VectorField:
    """g(x) = -a x r(t) / t with t = |x|^2; divergence -a [(p - 2) r(t)/t + 2 r'(t)]."""
    a = float(a)

    def g(x, s):
        t = _sq(x)
        return -a * x * (shrink.r(t) / t)[:, None]

    def div(x, s):
        t = _sq(x)
        return -a * ((x.shape[1] - 2) * shrink.r(t) / t + 2 * shrink.r_prime(t))

    return VectorField(f"baranchik_{shrink.kind}", g=g, div_x=div,
                       singular_at_origin=True, params=(a,) + shrink.params)


def residual_baranchik_field(shrink: ShrinkFn, k: int) -> VectorField:
    """Field of ``(1 - |u|^2 r(|x|^2/|u|^2) / |x|^2) x`` written as X + |u|^2/(k+2) g.

    ``g = -(k+2) x r(w) / t`` with ``t = |x|^2`` and ``w = t / |u|^2``.
    """
    kk = float(k + 2)

    def g(x, s):
        t = _sq(x)
        return -kk * x * (shrink.r(t / s) / t)[:, None]

    def div(x, s):
        t = _sq(x)
        w = t / s
        return -kk * ((x.shape[1] - 2) * shrink.r(w) / t + 2 * shrink.r_prime(w) / s)

    def d_usq(x, s):
        w = _sq(x) / s
        return -2 * kk ** 2 * shrink.r(w) * shrink.r_prime(w) / s ** 2

    return VectorField(f"residual_baranchik_{shrink.kind}", g=g, div_x=div, d_usq_norm_sq=d_usq,
                       u_dependent=True, singular_at_origin=True, params=(k,) + shrink.params)


def linear_field(matrix, offset=None) -> VectorField:
    """g(x) = A x + b; divergence trace(A)."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    b = np.zeros(A.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    tr = float(np.trace(A))
    return VectorField("linear", g=lambda x, s: x @ A.T + b,
                       div_x=lambda x, s: np.full(len(x), tr),
                       params=(tuple(A.ravel()), tuple(b)))


def constant_field(vector) -> VectorField:
    c = np.asarray(vector, dtype=float)
    return VectorField("constant", g=lambda x, s: np.broadcast_to(c, x.shape).copy(),
                       div_x=lambda x, s: np.zeros(len(x)), params=tuple(c))


def field_from_dict(data: dict[str, Any], p: int | None = None, k: int | None = None) -> VectorField:
    """Build a catalogued field from its config form, e.g. ``{kind: js, a: 3}``."""
    kind = data.get("kind")
    if kind == "js":
        a = data.get("a")
        if a is None:
            if p is None:
                raise ValueError("js field needs a (or a dimension to default to p - 2)")
            a = p - 2
        return js_field(a)
    if kind == "baranchik":
        return baranchik_field(ShrinkFn.from_dict(data["shrink"]), float(data.get("a", 1.0)))
    if kind == "residual_baranchik":
        kk = data.get("k", k)
        if kk is None:
            raise ValueError("residual_baranchik field needs k")
        return residual_baranchik_field(ShrinkFn.from_dict(data["shrink"]), int(kk))
    if kind == "linear":
        return linear_field(data["matrix"], data.get("offset"))
    if kind == "constant":
        return constant_field(data["vector"])
    raise ValueError(f"unknown field kind {kind!r}")


def catalogued_fields(p: int, k: int = 4) -> list[VectorField]:
    """Every field family in the catalogue at one representative setting."""
    from .shrinkage import constant_shrink, rational_shrink, saturating_linear

    rng = np.random.default_rng(p * 1000 + k)
    return [
        js_field(p - 2),
        baranchik_field(constant_shrink(p - 2)),
        baranchik_field(saturating_linear(0.5, p - 2)),
        baranchik_field(rational_shrink(p - 2)),
        residual_baranchik_field(rational_shrink(2 * (p - 2) / (k + 2)), k),
        residual_baranchik_field(saturating_linear(1.0 / (k + 2), 2 * (p - 2) / (k + 2)), k),
        linear_field(rng.standard_normal((p, p)), rng.standard_normal(p)),
        constant_field(rng.standard_normal(p)),
    ]
