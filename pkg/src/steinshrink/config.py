"""Experiment configuration documents.

A config is a YAML mapping::

    seed: 7
    n: 100000
    models:
      - {name: normal6, family: normal, p: 6, k: 4}
    estimators:
      - {name: js, variant: js_unknown, a: 4}
      - {name: id, variant: identity}
    theta_grid: {norms: [0, 1, 2, 5, 10, 100]}
    checks:
      - {operation: mc_risk_difference, model: normal6, estimator: js, baseline: id}
    output: {directory: results, formats: [csv, json], figures: true}

Checks refer to models and estimators by name. :func:`load_config` reports
every problem it finds at once through :class:`ConfigError`.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .bayes import BayesPriorSpec
from .errors import ConfigError
from .fields import field_from_dict
from .models import ModelSpec
from .shrinkage import EstimatorSpec, FaceRule

OPERATIONS = {
    # operation: (required keys, optional keys)
    "mc_risk": ({"model", "estimator"}, set()),
    "mc_risk_difference": ({"model", "estimator"}, {"baseline"}),
    "risk_sweep": ({"model", "estimators"}, {"theta_grid"}),
    "linear_risk_closed_form": ({"p", "a", "theta_norm_sq"}, {"sigma"}),
    "unbiased_risk_difference": ({"model", "field"}, set()),
    "risk_difference_agreement": ({"model"}, {"a"}),
    "stein_identity_check": ({"model", "field"}, set()),
    "q_identity_check": ({"model", "field"}, set()),
    "sphere_ball_check": ({"field", "p", "R"}, {"theta"}),
    "unknown_scale_cross_term_check": ({"model", "field"}, set()),
    "orthant_domination_check": ({"model"}, {"face_rule", "known_scale", "theta_grid"}),
    "ball_average_spot_check": ({"theta", "radii"}, set()),
    "minimax_a_bound": ({"model"}, {"method"}),
    "bayes_r_table": ({"prior"}, {"w_grid"}),
    "certify_minimax": ({"prior"}, {"w_grid"}),
    "f_independence": ({"prior", "points", "families"}, {"tol"}),
}
_COMMON = {"operation", "name", "n", "seed"}
DEFAULT_W_GRID = {"min": 1e-3, "max": 1e6, "num": 200}


@dataclass(frozen=True)
class ThetaGrid:
    """Either explicit vectors or norms along a direction (``"fixed"`` or a vector)."""

    vectors: tuple[tuple[float, ...], ...] | None = None
    norms: tuple[float, ...] | None = None
    direction: Any = "fixed"

    def resolve(self, p: int) -> list[np.ndarray]:
        from .risk import fixed_direction
        if self.vectors is not None:
            return [np.array(v, dtype=float) for v in self.vectors]
        d = fixed_direction(p) if self.direction == "fixed" else np.asarray(self.direction, float)
        d = d / np.linalg.norm(d)
        return [float(r) * d for r in self.norms]

    def to_dict(self) -> dict[str, Any]:
        if self.vectors is not None:
            return {"vectors": [list(v) for v in self.vectors]}
        d = self.direction if self.direction == "fixed" else list(self.direction)
        return {"norms": list(self.norms), "direction": d}

    @classmethod
    def from_dict(cls, data) -> "ThetaGrid":
        if isinstance(data, list):
            data = {"vectors": data}
        if "vectors" in data:
            return cls(vectors=tuple(tuple(float(x) for x in v) for v in data["vectors"]))
        if "norms" not in data:
            raise ValueError("theta_grid needs 'vectors' or 'norms'")
        d = data.get("direction", "fixed")
        if d != "fixed":
            d = tuple(float(x) for x in d)
        return cls(norms=tuple(float(r) for r in data["norms"]), direction=d)


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "steinshrink-results"
    formats: tuple[str, ...] = ("csv", "json")
    figures: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {"directory": self.directory, "formats": list(self.formats), "figures": self.figures}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OutputSpec":
        formats = tuple(data.get("formats", ("csv", "json")))
        bad = set(formats) - {"csv", "json"}
        if bad:
            raise ValueError(f"unknown output formats {sorted(bad)}")
        return cls(str(data.get("directory", "steinshrink-results")), formats,
                   bool(data.get("figures", True)))


@dataclass(frozen=True)
class CheckSpec:
    operation: str
    name: str
    params: dict[str, Any] = field(default_factory=dict)
    n: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out = {"operation": self.operation, "name": self.name}
        if self.n is not None:
            out["n"] = self.n
        if self.seed is not None:
            out["seed"] = self.seed
        out.update(copy.deepcopy(self.params))
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    models: dict[str, ModelSpec]
    estimators: dict[str, EstimatorSpec]
    checks: tuple[CheckSpec, ...]
    n: int = 100_000
    seed: int = 0
    theta_grid: ThetaGrid | None = None
    output: OutputSpec = OutputSpec()
    threads: int | None = None

    def to_dict(self) -> dict[str, Any]:
        """Canonical form: every default is spelled out."""
        out = {
            "seed": self.seed,
            "n": self.n,
            "threads": self.threads,
            "models": [{"name": k, **m.to_dict()} for k, m in self.models.items()],
            "estimators": [{"name": k, **e.to_dict()} for k, e in self.estimators.items()],
            "theta_grid": None if self.theta_grid is None else self.theta_grid.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
            "output": self.output.to_dict(),
        }
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def digest(self) -> str:
        canonical = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def check_n(self, check: CheckSpec) -> int:
        return self.n if check.n is None else check.n

    def check_seed(self, check: CheckSpec) -> int:
        return self.seed if check.seed is None else check.seed


# -- parsing ------------------------------------------------------------------

def parse_config(text: str) -> ExperimentConfig:
    """Parse a YAML document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"invalid YAML: {exc}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["the config document must be a mapping"])
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {str(path)!r}: {exc}"]) from exc
    return parse_config(text)


def _named(entries, kind: str, build, problems: list[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if entries is None:
        return out
    if isinstance(entries, dict):
        entries = [{"name": k, **v} for k, v in entries.items()]
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            problems.append(f"{kind}[{i}] must be a mapping")
            continue
        entry = dict(entry)
        name = str(entry.pop("name", f"{kind}{i}"))
        duplicate = name in out
        if duplicate:
            problems.append(f"duplicate {kind} name {name!r}")
        try:
            built = build(entry)
        except Exception as exc:  # every failure becomes a problem line
            problems.append(f"{kind} {name!r}: {exc}")
            continue
        if not duplicate:
            out[name] = built
    return out


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    problems: list[str] = []
    known = {"seed", "n", "threads", "models", "estimators", "theta_grid", "checks", "output"}
    for key in sorted(set(data) - known):
        problems.append(f"unknown top-level key {key!r}")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        problems.append("seed must be an integer in [0, 2^64)")
        seed = 0
    n = data.get("n", 100_000)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        problems.append("n must be an integer >= 1")
        n = 1
    threads = data.get("threads")
    if threads is not None and (not isinstance(threads, int) or threads < 1):
        problems.append("threads must be a positive integer")
        threads = None

    models = _named(data.get("models"), "model", ModelSpec.from_dict, problems)
    estimators = _named(data.get("estimators"), "estimator", EstimatorSpec.from_dict, problems)

    theta_grid = None
    if data.get("theta_grid") is not None:
        try:
            theta_grid = ThetaGrid.from_dict(data["theta_grid"])
        except Exception as exc:
            problems.append(f"theta_grid: {exc}")
    try:
        output = OutputSpec.from_dict(data.get("output") or {})
    except Exception as exc:
        problems.append(f"output: {exc}")
        output = OutputSpec()

    checks = []
    names = set()
    for i, raw in enumerate(data.get("checks") or []):
        if not isinstance(raw, dict):
            problems.append(f"checks[{i}] must be a mapping")
            continue
        op = raw.get("operation")
        name = str(raw.get("name", f"{i:02d}_{op}"))
        where = f"check {name!r}"
        if name in names:
            problems.append(f"duplicate check name {name!r}")
        names.add(name)
        if op not in OPERATIONS:
            problems.append(f"{where}: unknown operation {op!r}")
            continue
        required, optional = OPERATIONS[op]
        params = {k: v for k, v in raw.items() if k not in _COMMON}
        for key in sorted(required - set(params)):
            problems.append(f"{where}: missing {key!r}")
        for key in sorted(set(params) - required - optional):
            problems.append(f"{where}: unexpected key {key!r}")
        cn, cs = raw.get("n"), raw.get("seed")
        if cn is not None and (not isinstance(cn, int) or cn < 1):
            problems.append(f"{where}: n must be a positive integer")
        if cs is not None and (not isinstance(cs, int) or not 0 <= cs < 2 ** 64):
            problems.append(f"{where}: seed must be an integer in [0, 2^64)")
        check = CheckSpec(op, name, params, cn, cs)
        try:
            found = _check_problems(check, models, estimators)
        except Exception as exc:  # malformed values surface as problems, not tracebacks
            found = [f"malformed parameters ({exc})"]
        problems.extend(f"{where}: {msg}" for msg in found)
        checks.append(check)

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(models, estimators, tuple(checks), n, seed, theta_grid, output, threads)


def _check_problems(check: CheckSpec, models, estimators) -> list[str]:
    """Name resolution and dimension compatibility for one check."""
    out: list[str] = []
    prm = check.params
    model = None
    if "model" in prm:
        model = models.get(prm["model"])
        if model is None:
            out.append(f"unknown model {prm['model']!r}")
    ests = []
    for key in ("estimator", "baseline"):
        if key in prm:
            est = estimators.get(prm[key])
            if est is None:
                out.append(f"unknown estimator {prm[key]!r}")
            else:
                ests.append(est)
    if "estimators" in prm:
        if not isinstance(prm["estimators"], list) or not prm["estimators"]:
            out.append("estimators must be a nonempty list of names")
        else:
            for name in prm["estimators"]:
                if name not in estimators:
                    out.append(f"unknown estimator {name!r}")
                else:
                    ests.append(estimators[name])
    if model is not None:
        for est in ests:
            out.extend(compatibility_problems(model, est))
        if check.operation in ("unknown_scale_cross_term_check", "unbiased_risk_difference",
                               "risk_difference_agreement") and model.k < 1:
            out.append(f"{check.operation} needs a model with k >= 1")
        if check.operation == "stein_identity_check" and model.family != "normal":
            out.append("stein_identity_check needs the normal family")
        if check.operation == "orthant_domination_check":
            if not prm.get("known_scale", False) and model.k < 1:
                out.append("the unknown-scale orthant estimator needs k >= 1")
            try:
                FaceRule.from_dict(prm.get("face_rule") or {})
            except Exception as exc:
                out.append(f"face_rule: {exc}")
    if "field" in prm:
        p = model.p if model is not None else prm.get("p")
        k = model.k if model is not None else None
        try:
            fld = field_from_dict(prm["field"], p, k)
            if "matrix" in prm["field"] and p is not None and np.shape(prm["field"]["matrix"]) != (p, p):
                out.append(f"field matrix must be {p} x {p}")
            if check.operation == "unbiased_risk_difference" and fld.u_dependent:
                out.append("unbiased_risk_difference needs a field of x alone")
        except Exception as exc:
            out.append(f"field: {exc}")
    if "theta_grid" in prm:
        try:
            grid = ThetaGrid.from_dict(prm["theta_grid"])
            if model is not None and grid.vectors is not None and any(len(v) != model.p for v in grid.vectors):
                out.append(f"theta_grid vectors must have length {model.p}")
        except Exception as exc:
            out.append(f"theta_grid: {exc}")
    if "prior" in prm:
        try:
            prior = BayesPriorSpec.from_dict(prm["prior"])
            if check.operation != "certify_minimax":
                prior.validate()
        except Exception as exc:
            out.append(f"prior: {exc}")
    if "w_grid" in prm:
        g = prm["w_grid"]
        if not isinstance(g, dict) or not 0 < float(g.get("min", 0)) < float(g.get("max", 0)) \
                or int(g.get("num", 0)) < 2:
            out.append("w_grid needs 0 < min < max and num >= 2")
    if "families" in prm:
        dims = {}
        if isinstance(prm.get("prior"), dict):
            dims = {"p": prm["prior"].get("p"), "k": prm["prior"].get("k")}
        for i, fam in enumerate(prm["families"]):
            try:
                ModelSpec.from_dict({**dims, **fam})
            except Exception as exc:
                out.append(f"families[{i}]: {exc}")
    if check.operation == "sphere_ball_check":
        if not float(prm.get("R", 0)) > 0:
            out.append("R must be positive")
        th = prm.get("theta", 0.0)
        if not np.isscalar(th) and len(th) != int(prm.get("p", 0)):
            out.append("theta must be a scalar or a vector of length p")
    return out


def compatibility_problems(model: ModelSpec, est: EstimatorSpec) -> list[str]:
    out = []
    if est.needs_residual and model.k < 1:
        out.append(f"{est.label()} needs a residual but model {model.label()} has k = 0")
    if est.variant == "generalized_bayes" and (est.prior.p, est.prior.k) != (model.p, model.k):
        out.append(f"prior dimensions (p={est.prior.p}, k={est.prior.k}) do not match the model")
    return out


# -- manifest -----------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str
    outputs: dict[str, list[str]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    passed: dict[str, bool | None] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return not self.errors and all(v is not False for v in self.passed.values())

    def to_dict(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash, "seed": self.seed, "version": self.version,
                "outputs": self.outputs, "timings": self.timings, "passed": self.passed,
                "errors": self.errors, "all_passed": self.all_passed}
