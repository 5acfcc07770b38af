"""Shrinkage estimator catalogue.

All estimators accept a single observation (``x`` of shape ``(p,)``) or a
batch (``x`` of shape ``(n, p)``, ``u`` of shape ``(n, k)``) and return an
array of the same shape as ``x``. Where the shrink factor is undefined
(``x = 0``) the observation is returned unchanged and the row is flagged;
see :func:`estimate_flagged`.

Constant conventions:

* ``js_known(a)``:        ``(1 - a sigma^2 / |x|^2) x``
* ``baranchik_known(a, r)``: ``(1 - a r(|x|^2/sigma^2) sigma^2 / |x|^2) x``
* ``js_unknown(a)``:      ``(1 - a |u|^2 / ((k+2) |x|^2)) x``
* ``baranchik_unknown(r)``: ``(1 - |u|^2 r(|x|^2/|u|^2) / |x|^2) x``
* ``orthant_restricted``:  shrink the positive part ``x_+`` on its face of
  dimension ``s`` with ``r_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import DimensionMismatchError, MissingResidualError

VARIANTS = ("identity", "js_known", "baranchik_known", "js_unknown",
            "baranchik_unknown", "orthant_restricted", "generalized_bayes")
UNKNOWN_SCALE = ("js_unknown", "baranchik_unknown", "generalized_bayes")


@dataclass(frozen=True)
class ShrinkFn:
    """Scalar shrinkage function r(t) with its derivative and claimed properties."""

    kind: str
    params: tuple[float, ...]
    r: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    r_prime: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    declared_upper_bound: float = math.inf
    monotone_nondecreasing: bool = True

    def __call__(self, t):
        return self.r(t)

    def to_dict(self) -> dict[str, Any]:
        names = _SHRINK_PARAMS.get(self.kind)
        if names is None:
            raise TypeError(f"custom shrink function {self.kind!r} is not serializable")
        return {"kind": self.kind, **dict(zip(names, self.params))}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ShrinkFn":
        kind = data.get("kind")
        if kind not in _SHRINK_FACTORIES:
            raise ValueError(f"unknown shrink function kind {kind!r}")
        return _SHRINK_FACTORIES[kind](*(float(data[n]) for n in _SHRINK_PARAMS[kind]))


def constant_shrink(a: float) -> ShrinkFn:
    """r(t) = a."""
    a = float(a)
    return ShrinkFn("constant", (a,),
                    r=lambda t: np.full_like(np.asarray(t, dtype=float), a),
                    r_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                    declared_upper_bound=a)


def saturating_linear(slope: float, bound: float) -> ShrinkFn:
    """r(t) = min(slope * t, bound). The derivative at the kink is taken from the left."""
    slope, bound = float(slope), float(bound)
    if slope < 0 or bound < 0:
        raise ValueError("slope and bound must be nonnegative")
    knot = bound / slope if slope > 0 else math.inf
    return ShrinkFn("saturating_linear", (slope, bound),
                    r=lambda t: np.minimum(slope * np.asarray(t, dtype=float), bound),
                    r_prime=lambda t: np.where(np.asarray(t, dtype=float) <= knot, slope, 0.0),
                    declared_upper_bound=bound)


def rational_shrink(bound: float) -> ShrinkFn:
    """r(t) = bound * t / (1 + t); smooth, increasing, tends to ``bound``."""
    bound = float(bound)
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    return ShrinkFn("rational", (bound,),
                    r=lambda t: bound * np.asarray(t, dtype=float) / (1.0 + np.asarray(t, dtype=float)),
                    r_prime=lambda t: bound / (1.0 + np.asarray(t, dtype=float)) ** 2,
                    declared_upper_bound=bound)


_SHRINK_FACTORIES = {"constant": constant_shrink, "saturating_linear": saturating_linear,
                     "rational": rational_shrink}
_SHRINK_PARAMS = {"constant": ("a",), "saturating_linear": ("slope", "bound"),
                  "rational": ("bound",)}


@dataclass(frozen=True)
class FaceRule:
    """Family of shrink functions r_s indexed by the face dimension s.

    ``constant_face`` uses ``r_s = scale * (s - 2)_+``; ``rational_face`` uses
    ``r_s(t) = scale * (s - 2)_+ * t / (1 + t)``; ``zero`` never shrinks.
    The default ``constant_face`` with scale 1 sits at half the admissible
    ceiling ``2 (s - 2)_+``.
    """

    kind: str = "constant_face"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant_face", "rational_face", "zero"):
            raise ValueError(f"unknown face rule {self.kind!r}")
        if self.scale < 0:
            raise ValueError("face rule scale must be nonnegative")

    def for_face(self, s: int) -> ShrinkFn:
        level = self.scale * max(s - 2, 0)
        if self.kind == "zero" or level == 0:
            return constant_shrink(0.0)
        if self.kind == "constant_face":
            return constant_shrink(level)
        return rational_shrink(level)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FaceRule":
        return cls(kind=data.get("kind", "constant_face"), scale=float(data.get("scale", 1.0)))


@dataclass(frozen=True)
class EstimatorSpec:
    """A tagged estimator description. Build with the classmethod constructors."""

    variant: str
    a: float | None = None
    shrink: ShrinkFn | None = None
    sigma: float = 1.0
    face_rule: FaceRule | None = None
    known_scale: bool = False
    prior: Any = None  # bayes.BayesPriorSpec

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.a is not None and self.a < 0:
            raise ValueError("shrinkage constants must be nonnegative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        needs = {"js_known": "a", "js_unknown": "a", "baranchik_known": "shrink",
                 "baranchik_unknown": "shrink", "orthant_restricted": "face_rule",
                 "generalized_bayes": "prior"}
        attr = needs.get(self.variant)
        if attr and getattr(self, attr) is None:
            raise ValueError(f"{self.variant} requires {attr}")
        if self.variant == "baranchik_known" and self.a is None:
            object.__setattr__(self, "a", 1.0)

    @classmethod
    def identity(cls) -> "EstimatorSpec":
        return cls("identity")

    @classmethod
    def js_known(cls, a: float, sigma: float = 1.0) -> "EstimatorSpec":
        return cls("js_known", a=float(a), sigma=sigma)

    @classmethod
    def baranchik_known(cls, shrink: ShrinkFn, a: float = 1.0, sigma: float = 1.0) -> "EstimatorSpec":
        return cls("baranchik_known", a=float(a), shrink=shrink, sigma=sigma)

    @classmethod
    def js_unknown(cls, a: float) -> "EstimatorSpec":
        return cls("js_unknown", a=float(a))

    @classmethod
    def baranchik_unknown(cls, shrink: ShrinkFn) -> "EstimatorSpec":
        return cls("baranchik_unknown", shrink=shrink)

    @classmethod
    def orthant(cls, face_rule: FaceRule | None = None, known_scale: bool = False,
                sigma: float = 1.0) -> "EstimatorSpec":
        return cls("orthant_restricted", face_rule=face_rule or FaceRule(),
                   known_scale=known_scale, sigma=sigma)

    @classmethod
    def generalized_bayes(cls, prior) -> "EstimatorSpec":
        return cls("generalized_bayes", prior=prior)

    @property
    def needs_residual(self) -> bool:
        return self.variant in UNKNOWN_SCALE or (
            self.variant == "orthant_restricted" and not self.known_scale)

    def label(self) -> str:
        if self.variant in ("js_known", "js_unknown"):
            return f"{self.variant}(a={self.a:g})"
        if self.shrink is not None:
            inner = ",".join(f"{v:g}" for v in self.shrink.params)
            return f"{self.variant}({self.shrink.kind}:{inner})"
        if self.variant == "orthant_restricted":
            scale = "known" if self.known_scale else "unknown"
            return f"orthant({self.face_rule.kind}:{self.face_rule.scale:g},{scale})"
        if self.variant == "generalized_bayes":
            return f"generalized_bayes(a={self.prior.a_prior:g},b={self.prior.b_prior:g})"
        return self.variant

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"variant": self.variant}
        if self.a is not None:
            out["a"] = self.a
        if self.shrink is not None:
            out["shrink"] = self.shrink.to_dict()
        if self.variant in ("js_known", "baranchik_known") or (
                self.variant == "orthant_restricted" and self.known_scale):
            out["sigma"] = self.sigma
        if self.face_rule is not None:
            out["face_rule"] = self.face_rule.to_dict()
            out["known_scale"] = self.known_scale
        if self.prior is not None:
            out["prior"] = self.prior.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EstimatorSpec":
        known = {"variant", "a", "shrink", "sigma", "face_rule", "known_scale", "prior"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown estimator fields: {sorted(unknown)}")
        variant = data.get("variant")
        shrink = data.get("shrink")
        if isinstance(shrink, dict):
            shrink = ShrinkFn.from_dict(shrink)
        face = data.get("face_rule")
        if isinstance(face, dict):
            face = FaceRule.from_dict(face)
        elif face is None and variant == "orthant_restricted":
            face = FaceRule()
        prior = data.get("prior")
        if isinstance(prior, dict):
            from .bayes import BayesPriorSpec
            prior = BayesPriorSpec.from_dict(prior)
        a = data.get("a")
        return cls(variant=variant, a=None if a is None else float(a), shrink=shrink,
                   sigma=float(data.get("sigma", 1.0)), face_rule=face,
                   known_scale=bool(data.get("known_scale", False)), prior=prior)


# -- helpers ------------------------------------------------------------------

def _rows(x, u=None):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2:
        raise DimensionMismatchError("x must be a vector or an (n, p) matrix")
    u2 = None
    if u is not None:
        u2 = np.asarray(u, dtype=float)
        u2 = u2.reshape(1, -1) if single else np.atleast_2d(u2)
        if u2.shape[0] != x2.shape[0]:
            raise DimensionMismatchError("x and u have different numbers of rows")
    return x2, u2, single


def _sq(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def _shrunk(x2, coef, zero):
    """(1 - coef) x with coef only evaluated where x != 0."""
    factor = np.where(zero, 1.0, 1.0 - np.where(zero, 0.0, coef))
    return factor[:, None] * x2


def _need_u(u2, k_expected=None):
    if u2 is None:
        raise MissingResidualError("this estimator needs the residual vector u")
    if k_expected is not None and u2.shape[1] != k_expected:
        raise DimensionMismatchError(f"u has dimension {u2.shape[1]}, expected {k_expected}")
    return u2


def _finish(out, zero, single):
    if single:
        return out[0], bool(zero[0])
    return out, zero


# -- estimators ---------------------------------------------------------------

def js_known_scale(x, a: float, sigma: float = 1.0, *, flags: bool = False):
    x2, _, single = _rows(x)
    t = _sq(x2)
    zero = t == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = a * sigma ** 2 / t
    res = _finish(_shrunk(x2, coef, zero), zero, single)
    return res if flags else res[0]


def baranchik_known_scale(x, shrink: ShrinkFn, a: float = 1.0, sigma: float = 1.0, *,
                          flags: bool = False):
    x2, _, single = _rows(x)
    t = _sq(x2) / sigma ** 2
    zero = t == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = a * shrink.r(t) / t
    res = _finish(_shrunk(x2, coef, zero), zero, single)
    return res if flags else res[0]


def js_unknown_scale(x, u, a: float, *, flags: bool = False):
    """(1 - a |u|^2 / ((k+2) |x|^2)) x; ``a = p - 2`` is the uniformly best constant."""
    x2, u2, single = _rows(x, u)
    u2 = _need_u(u2)
    k = u2.shape[1]
    t = _sq(x2)
    zero = t == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = a * _sq(u2) / ((k + 2) * t)
    res = _finish(_shrunk(x2, coef, zero), zero, single)
    return res if flags else res[0]


def baranchik_unknown_scale(x, u, shrink: ShrinkFn, *, flags: bool = False):
    """(1 - |u|^2 r(W) / |x|^2) x with W = |x|^2 / |u|^2."""
    x2, u2, single = _rows(x, u)
    u2 = _need_u(u2)
    usq = _sq(u2)
    if np.any(usq == 0):
        raise MissingResidualError("|u| = 0 leaves the scale undetermined")
    t = _sq(x2)
    zero = t == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = usq * shrink.r(t / usq) / t
    res = _finish(_shrunk(x2, coef, zero), zero, single)
    return res if flags else res[0]


def orthant_estimate(x, u=None, face_rule: FaceRule | None = None, *, known_scale: bool | None = None,
                     sigma: float = 1.0, flags: bool = False):
    """Shrink the projection onto the positive orthant within its face.

    ``s`` is the number of strictly positive coordinates; the projection
    ``P(x) = max(x, 0)`` is shrunk by ``c r_s(|P|^2 / c) / |P|^2`` with
    ``c = sigma^2`` (known scale) or by ``c r_s(|P|^2) / |P|^2`` with
    ``c = |u|^2 / (k + 2)`` (unknown scale). Faces with ``s <= 2`` and the
    origin are returned unshrunk.
    """
    face_rule = face_rule or FaceRule()
    if known_scale is None:
        known_scale = u is None
    x2, u2, single = _rows(x, u)
    proj = np.maximum(x2, 0.0)
    s = np.count_nonzero(x2 > 0, axis=1)
    tp = _sq(proj)
    if known_scale:
        c = np.full(len(x2), sigma ** 2)
    else:
        u2 = _need_u(u2)
        c = _sq(u2) / (u2.shape[1] + 2)
    coef = np.zeros(len(x2))
    for face in np.unique(s):
        if face <= 2:
            continue
        rs = face_rule.for_face(int(face))
        rows = (s == face) & (tp > 0)
        arg = tp[rows] / c[rows] if known_scale else tp[rows]
        coef[rows] = c[rows] * rs.r(arg) / tp[rows]
    out = (1.0 - coef)[:, None] * proj
    res = _finish(out, np.zeros(len(x2), dtype=bool), single)
    return res if flags else res[0]


def estimate_flagged(spec: EstimatorSpec, x, u=None):
    """Evaluate an estimator and also return the undefined-shrink-point flag(s)."""
    x_arr = np.asarray(x, dtype=float)
    v = spec.variant
    if spec.needs_residual and u is None:
        raise MissingResidualError(f"{v} needs the residual vector u")
    if v == "identity":
        x2, _, single = _rows(x_arr)
        return _finish(x2.copy(), np.zeros(len(x2), dtype=bool), single)
    if v == "js_known":
        return js_known_scale(x_arr, spec.a, spec.sigma, flags=True)
    if v == "baranchik_known":
        return baranchik_known_scale(x_arr, spec.shrink, spec.a, spec.sigma, flags=True)
    if v == "js_unknown":
        return js_unknown_scale(x_arr, u, spec.a, flags=True)
    if v == "baranchik_unknown":
        return baranchik_unknown_scale(x_arr, u, spec.shrink, flags=True)
    if v == "orthant_restricted":
        return orthant_estimate(x_arr, None if spec.known_scale else u, spec.face_rule,
                                known_scale=spec.known_scale, sigma=spec.sigma, flags=True)
    from .bayes import generalized_bayes_batch
    return generalized_bayes_batch(spec.prior, x_arr, u, flags=True)


def estimate(spec: EstimatorSpec, x, u=None) -> np.ndarray:
    """Evaluate ``spec`` at ``x`` (and ``u`` for unknown-scale variants)."""
    return estimate_flagged(spec, x, u)[0]
