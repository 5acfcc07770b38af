"""Spherically symmetric joint laws for (X, U) and their radial functions.

Every family here is a scale mixture of normals: conditionally on a variance
multiplier V, ``(X, U) ~ N((theta, 0), V sigma^2 I_{p+k})``. The normal family
has V = 1, the multivariate t has V ~ InvGamma(df/2, df/2), and
``scale_mixture`` takes an explicit :class:`MixingLaw`.

For a joint density ``f(t)`` with ``t`` the squared distance to the centre,
``F(t) = (1/2) ∫_t^∞ f(s) ds`` and ``Q(t) = F(t) / f(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DegenerateDensityError, NonfiniteMomentError, QuadratureError
from .parallel import block_generator, block_ranges, check_seed, map_ordered
from .quadrature import log_axis_integral

FAMILIES = ("normal", "student_t", "scale_mixture")
_CONTINUOUS = ("inverse_gamma", "gamma", "lognormal")


@dataclass(frozen=True)
class MixingLaw:
    """Law of the variance multiplier V.

    Either a finite list of atoms with weights, or one of the named continuous
    densities ``inverse_gamma(shape, scale)``, ``gamma(shape, scale)`` and
    ``lognormal(mu, s)``. Continuous moments use a 256-node Gauss--Legendre
    rule on the ``log v`` axis.
    """

    atoms: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    distribution: str | None = None
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.distribution is None:
            if not self.atoms or len(self.atoms) != len(self.weights):
                raise ValueError("a discrete mixing law needs matching, non-empty atoms and weights")
            if any(v <= 0 or not math.isfinite(v) for v in self.atoms):
                raise ValueError("mixing atoms must be finite and strictly positive")
            if any(w < 0 for w in self.weights):
                raise ValueError("mixing weights must be nonnegative")
            if abs(math.fsum(self.weights) - 1.0) > 1e-12:
                raise ValueError("mixing weights must sum to 1 within 1e-12")
        else:
            if self.distribution not in _CONTINUOUS:
                raise ValueError(f"unknown mixing distribution {self.distribution!r}")
            if len(self.params) != 2:
                raise ValueError(f"{self.distribution} takes two parameters")
            first, second = self.params
            if self.distribution == "lognormal":
                if second <= 0:
                    raise ValueError("lognormal s must be positive")
            elif first <= 0 or second <= 0:
                raise ValueError(f"{self.distribution} shape and scale must be positive")

    # -- constructors -------------------------------------------------------
    @classmethod
    def discrete(cls, atoms, weights=None) -> "MixingLaw":
        atoms = tuple(float(v) for v in atoms)
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms)
        return cls(atoms=atoms, weights=tuple(float(w) for w in weights))

    @classmethod
    def point_mass(cls, v0: float) -> "MixingLaw":
        return cls.discrete([v0], [1.0])

    @classmethod
    def inverse_gamma(cls, shape: float, scale: float) -> "MixingLaw":
        return cls(distribution="inverse_gamma", params=(float(shape), float(scale)))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "MixingLaw":
        return cls(distribution="gamma", params=(float(shape), float(scale)))

    @classmethod
    def lognormal(cls, mu: float, s: float) -> "MixingLaw":
        return cls(distribution="lognormal", params=(float(mu), float(s)))

    @property
    def is_discrete(self) -> bool:
        return self.distribution is None

    # -- densities and moments ----------------------------------------------
    def logpdf(self, v: np.ndarray) -> np.ndarray:
        """Log density of a continuous law (not defined for atoms)."""
        if self.is_discrete:
            raise TypeError("a discrete mixing law has no density")
        v = np.asarray(v, dtype=float)
        first, second = self.params
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lv = np.log(v)
            if self.distribution == "inverse_gamma":
                out = first * math.log(second) - gammaln(first) - (first + 1) * lv - second / v
            elif self.distribution == "gamma":
                out = -gammaln(first) - first * math.log(second) + (first - 1) * lv - v / second
            else:
                out = (-lv - math.log(second) - 0.5 * math.log(2 * math.pi)
                       - 0.5 * ((lv - first) / second) ** 2)
        return np.where(v > 0, out, -np.inf)

    def moment_is_finite(self, s: float) -> bool:
        if self.is_discrete:
            return True
        first, _ = self.params
        if self.distribution == "inverse_gamma":
            return s < first
        if self.distribution == "gamma":
            return s > -first
        return True

    def log_moment(self, s: float) -> float:
        if not self.moment_is_finite(s):
            raise NonfiniteMomentError(f"E[V^{s:g}] diverges for {self.distribution}{self.params}")
        if self.is_discrete:
            atoms = np.array(self.atoms)
            return float(logsumexp(s * np.log(atoms), b=np.array(self.weights)))
        return log_axis_integral(lambda y: s * y + self.logpdf(np.exp(y)) + y)

    def moment(self, s: float) -> float:
        """E[V^s]."""
        return math.exp(self.log_moment(s))

    def log_weighted_integral(self, power: float, t: np.ndarray, dim: int,
                              sigma: float = 1.0) -> np.ndarray:
        """``log E[V^power (2π V σ²)^{-dim/2} exp(-t / (2 V σ²))]`` for each ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s2 = sigma * sigma
        if self.is_discrete:
            v = np.array(self.atoms)[None, :]
            terms = (power * np.log(v) - 0.5 * dim * np.log(2 * math.pi * v * s2)
                     - t[:, None] / (2 * v * s2))
            return logsumexp(terms, b=np.array(self.weights)[None, :], axis=1)
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            def integrand(y, ti=ti):
                v = np.exp(y)
                return (power * y - 0.5 * dim * np.log(2 * math.pi * v * s2)
                        - ti / (2 * v * s2) + self.logpdf(v) + y)
            out[i] = log_axis_integral(integrand)
        return out

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.is_discrete:
            cdf = np.cumsum(self.weights)
            idx = np.searchsorted(cdf, gen.random(size) * cdf[-1], side="right")
            return np.array(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]
        first, second = self.params
        if self.distribution == "inverse_gamma":
            return second / gen.standard_gamma(first, size)
        if self.distribution == "gamma":
            return second * gen.standard_gamma(first, size)
        return np.exp(first + second * gen.standard_normal(size))

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        if self.is_discrete:
            return {"atoms": list(self.atoms), "weights": list(self.weights)}
        names = ("mu", "s") if self.distribution == "lognormal" else ("shape", "scale")
        return {"distribution": self.distribution, **dict(zip(names, self.params))}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MixingLaw":
        if "atoms" in data:
            return cls.discrete(data["atoms"], data.get("weights"))
        dist = data.get("distribution")
        if dist == "lognormal":
            return cls.lognormal(data["mu"], data["s"])
        if dist in ("inverse_gamma", "gamma"):
            return cls(distribution=dist, params=(float(data["shape"]), float(data["scale"])))
        raise ValueError(f"cannot build a mixing law from {data!r}")


@dataclass(frozen=True)
class ModelSpec:
    """A spherically symmetric law for (X, U) with location ``(theta, 0)``.

    ``theta`` defaults to the origin. The explicit-scale convention is used:
    the joint density is ``sigma^{-(p+k)} f(t / sigma^2)``.
    """

    family: str
    p: int
    k: int = 0
    sigma: float = 1.0
    theta: tuple[float, ...] | None = None
    degrees_of_freedom: float | None = None
    mixing: MixingLaw | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be a positive integer")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a nonnegative integer")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive")
        theta = (0.0,) * self.p if self.theta is None else tuple(float(v) for v in self.theta)
        if len(theta) != self.p:
            raise ValueError(f"theta has length {len(theta)}, expected p={self.p}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.family == "student_t":
            if self.degrees_of_freedom is None or not self.degrees_of_freedom > 0:
                raise ValueError("student_t needs degrees_of_freedom > 0")
            object.__setattr__(self, "degrees_of_freedom", float(self.degrees_of_freedom))
        elif self.degrees_of_freedom is not None:
            raise ValueError("degrees_of_freedom only applies to student_t")
        if self.family == "scale_mixture":
            if not isinstance(self.mixing, MixingLaw):
                raise ValueError("scale_mixture needs a MixingLaw")
        elif self.mixing is not None:
            raise ValueError("mixing only applies to scale_mixture")

    @classmethod
    def normal(cls, p, k=0, sigma=1.0, theta=None) -> "ModelSpec":
        return cls("normal", p, k, sigma, theta)

    @classmethod
    def student_t(cls, df, p, k=0, sigma=1.0, theta=None) -> "ModelSpec":
        return cls("student_t", p, k, sigma, theta, degrees_of_freedom=df)

    @classmethod
    def scale_mixture(cls, mixing, p, k=0, sigma=1.0, theta=None) -> "ModelSpec":
        return cls("scale_mixture", p, k, sigma, theta, mixing=mixing)

    @property
    def theta_array(self) -> np.ndarray:
        return np.array(self.theta, dtype=float)

    def with_theta(self, theta) -> "ModelSpec":
        return ModelSpec(self.family, self.p, self.k, self.sigma, tuple(theta),
                         self.degrees_of_freedom, self.mixing)

    def mixing_law(self) -> MixingLaw:
        """The law of V that realizes this family."""
        if self.family == "normal":
            return MixingLaw.point_mass(1.0)
        if self.family == "student_t":
            half = self.degrees_of_freedom / 2
            return MixingLaw.inverse_gamma(half, half)
        return self.mixing

    def per_coordinate_variance(self) -> float:
        """Var(X_i) = sigma^2 E[V]; ``inf`` when the second moment does not exist."""
        if self.family == "normal":
            return self.sigma ** 2
        if self.family == "student_t":
            df = self.degrees_of_freedom
            return self.sigma ** 2 * df / (df - 2) if df > 2 else math.inf
        law = self.mixing
        if not law.moment_is_finite(1.0):
            return math.inf
        return self.sigma ** 2 * law.moment(1.0)

    def label(self) -> str:
        if self.family == "student_t":
            fam = f"student_t(df={self.degrees_of_freedom:g})"
        elif self.family == "scale_mixture":
            fam = "scale_mixture"
        else:
            fam = "normal"
        return f"{fam},p={self.p},k={self.k},sigma={self.sigma:g}"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family, "p": self.p, "k": self.k,
                               "sigma": self.sigma, "theta": list(self.theta)}
        if self.degrees_of_freedom is not None:
            out["degrees_of_freedom"] = self.degrees_of_freedom
        if self.mixing is not None:
            out["mixing"] = self.mixing.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        known = {"family", "p", "k", "sigma", "theta", "degrees_of_freedom", "mixing", "df"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        df = data.get("degrees_of_freedom", data.get("df"))
        mixing = data.get("mixing")
        if isinstance(mixing, dict):
            mixing = MixingLaw.from_dict(mixing)
        theta = data.get("theta")
        if theta is not None and np.isscalar(theta):
            theta = [float(theta)] * int(data["p"])
        return cls(family=data["family"], p=int(data["p"]), k=int(data.get("k", 0)),
                   sigma=float(data.get("sigma", 1.0)), theta=theta,
                   degrees_of_freedom=None if df is None else float(df), mixing=mixing)


@dataclass(frozen=True)
class RadialLaw:
    """Radial functions f, F and Q of a model, in dimension ``dim``.

    ``dim = p`` describes X alone (known-scale identities); ``dim = p + k``
    describes the joint vector (X, U).
    """

    model: ModelSpec
    dim: int

    @classmethod
    def of(cls, model: ModelSpec, joint: bool = True) -> "RadialLaw":
        return cls(model, model.p + model.k if joint else model.p)

    def log_f(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        m, d = self.model, self.dim
        s2 = m.sigma ** 2
        if m.family == "normal":
            return -0.5 * d * math.log(2 * math.pi * s2) - t / (2 * s2)
        if m.family == "student_t":
            nu = m.degrees_of_freedom
            return (gammaln((nu + d) / 2) - gammaln(nu / 2) - 0.5 * d * math.log(nu * math.pi * s2)
                    - 0.5 * (nu + d) * np.log1p(t / (nu * s2)))
        return m.mixing.log_weighted_integral(0.0, np.atleast_1d(t), d, m.sigma).reshape(t.shape)

    def log_F(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        m = self.model
        if m.family == "scale_mixture":
            return (m.mixing.log_weighted_integral(1.0, np.atleast_1d(t), self.dim, m.sigma)
                    .reshape(t.shape) + 2 * math.log(m.sigma))
        return self.log_f(t) + np.log(self._closed_q(t))

    def f(self, t) -> np.ndarray:
        return np.exp(self.log_f(t))

    def F(self, t) -> np.ndarray:
        return np.exp(self.log_F(t))

    def _closed_q(self, t: np.ndarray) -> np.ndarray:
        m = self.model
        s2 = m.sigma ** 2
        if m.family == "normal":
            return np.full_like(t, s2, dtype=float)
        nu = m.degrees_of_freedom
        if nu + self.dim - 2 <= 0:
            raise NonfiniteMomentError("the radial tail integral diverges (df + dim <= 2)")
        return (nu * s2 + t) / (nu + self.dim - 2)


def q_function(radial: RadialLaw, t):
    """Q(t) = F(t) / f(t), computed as ``exp(log F - log f)``.

    Closed form for the normal (``sigma^2``) and multivariate-t families;
    mixture averages otherwise.

    Raises:
        DegenerateDensityError: where f(t) underflows to zero.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    if radial.model.family != "scale_mixture":
        q = radial._closed_q(t_arr)
    else:
        log_f = radial.log_f(t_arr)
        if np.any(~np.isfinite(log_f)):
            raise DegenerateDensityError("radial density underflows at the requested t")
        q = np.exp(radial.log_F(t_arr) - log_f)
    return float(q) if np.ndim(t) == 0 else q


def mixture_q_lower_bound(mixing: MixingLaw, p: int) -> float:
    """c = E[V^{1-p/2}] / E[V^{-p/2}], a lower bound on Q for unit sigma.

    Raises:
        NonfiniteMomentError: if either moment diverges.
    """
    return math.exp(mixing.log_moment(1 - p / 2) - mixing.log_moment(-p / 2))


def posterior_mean_V(mixing: MixingLaw, p: int, t) -> float | np.ndarray:
    """E_t[V] under the density proportional to ``v^{-p/2} exp(-t/2v) g(v)``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    num = mixing.log_weighted_integral(1.0, t_arr, p)
    den = mixing.log_weighted_integral(0.0, t_arr, p)
    if np.any(~np.isfinite(den)):
        raise QuadratureError("posterior weight integral vanished")
    out = np.exp(num - den)
    return float(out[0]) if np.ndim(t) == 0 else out


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Draws ``x`` (n x p) and ``u`` (n x k) for replicates ``start .. start+n-1``."""

    x: np.ndarray
    u: np.ndarray
    model: ModelSpec
    seed: int
    n: int
    start: int = 0
    v: np.ndarray | None = field(default=None, repr=False)

    @property
    def usq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.u, self.u)


def sample_block(model: ModelSpec, seed: int, block: int, start: int, stop: int,
                 stream: int = 0) -> SampleBatch:
    """Draw one fixed block of replicates. Blocks are the unit of parallel work."""
    gen = block_generator(seed, block, stream)
    m = stop - start
    law = None if model.family == "normal" else model.mixing_law()
    v = np.ones(m) if law is None else law.sample(gen, m)
    z = gen.standard_normal((m, model.p + model.k))
    scale = model.sigma * np.sqrt(v)[:, None]
    x = model.theta_array + scale * z[:, :model.p]
    u = scale * z[:, model.p:]
    return SampleBatch(x=x, u=u, model=model, seed=seed, n=m, start=start, v=v)


def sample_joint(model: ModelSpec, n: int, seed: int, *, threads: int | None = None,
                 stream: int = 0) -> SampleBatch:
    """Draw ``n`` independent replicates of (X, U).

    The result is a pure function of ``(model, n, seed, stream)``; the thread
    count only changes who computes which block.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    seed = check_seed(seed)
    blocks = map_ordered(lambda r: sample_block(model, seed, r[0], r[1], r[2], stream),
                         block_ranges(int(n)), threads)
    return SampleBatch(
        x=np.concatenate([b.x for b in blocks]),
        u=np.concatenate([b.u for b in blocks]),
        model=model, seed=seed, n=int(n),
        v=np.concatenate([b.v for b in blocks]),
    )
