import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from steinshrink.errors import DimensionMismatchError, MissingResidualError
from steinshrink.shrinkage import (
    EstimatorSpec, FaceRule, ShrinkFn, baranchik_unknown_scale, constant_shrink, estimate,
    estimate_flagged, js_unknown_scale, orthant_estimate, rational_shrink, saturating_linear)
from steinshrink.bayes import BayesPriorSpec

SHRINKS = [constant_shrink(1.5), saturating_linear(0.5, 3.0), rational_shrink(3.0)]


def test_identity_returns_x():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(estimate(EstimatorSpec.identity(), x), x)


def test_js_known_exact_zero():
    x = np.array([1.0, 1.0, 1.0, 0.0, 0.0])
    assert np.array_equal(estimate(EstimatorSpec.js_known(3.0), x), np.zeros(5))


def test_js_unknown_examples():
    x = np.array([2.0, 0, 0, 0, 0])
    u = np.array([np.sqrt(6.0), 0, 0, 0])  # |u|^2 = k + 2
    assert estimate(EstimatorSpec.js_unknown(3.0), x, u) == pytest.approx([0.5, 0, 0, 0, 0])
    x = np.array([np.sqrt(3.0), 0, 0, 0, 0])
    assert np.allclose(js_unknown_scale(x, u, 3.0), 0.0, atol=1e-15)
    assert np.array_equal(js_unknown_scale(x, u, 0.0), x)


def test_baranchik_unknown_examples():
    rng = np.random.default_rng(1)
    x, u = rng.standard_normal(5), rng.standard_normal(4)
    assert np.array_equal(baranchik_unknown_scale(x, u, constant_shrink(0.0)), x)
    t, s = x @ x, u @ u
    assert baranchik_unknown_scale(x, u, constant_shrink(0.7)) == pytest.approx((1 - 0.7 * s / t) * x)
    # r(w) = min(w/(k+2), 2(p-2)/(k+2)) saturates at large W
    r = saturating_linear(1 / 6, 1.0)
    big = 1e4 * x
    factor = baranchik_unknown_scale(big, u, r) / big
    assert factor == pytest.approx(np.full(5, 1 - s / (big @ big)), rel=1e-14)


def test_orthant_examples():
    x = np.array([1.0, 1, 1, 1, -1, -1])
    spec = EstimatorSpec.orthant(FaceRule("constant_face", 1.0), known_scale=True)
    assert estimate(spec, x) == pytest.approx([0.5, 0.5, 0.5, 0.5, 0, 0])
    assert np.array_equal(orthant_estimate(-np.ones(4), face_rule=FaceRule()), np.zeros(4))
    pos = np.array([0.3, 2.0, 1.0, 4.0])
    assert np.array_equal(orthant_estimate(pos, face_rule=FaceRule("zero")), pos)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=8),
       st.sampled_from(["constant_face", "rational_face", "zero"]))
def test_orthant_invariants(xs, kind):
    x = np.array(xs)
    u = np.ones(3)
    out = orthant_estimate(x, u, FaceRule(kind, 1.0))
    proj = np.maximum(x, 0)
    assert np.all(out[x <= 0] == 0)
    # shrinkage acts along P(x), so the output is a nonnegative multiple of
    # P(x) whenever c r_s(|P|^2) <= |P|^2 (always for |P| large enough)
    s = int(np.count_nonzero(x > 0))
    c, tp = (u @ u) / 5, proj @ proj
    factor_nonneg = s <= 2 or tp == 0 or c * FaceRule(kind, 1.0).for_face(s)(tp) <= tp
    if factor_nonneg:
        assert np.all(out >= 0)
        assert np.all(out <= proj + 1e-12)
    assert np.array_equal(orthant_estimate(x, u, FaceRule("zero")), np.maximum(x, 0))


def _specs():
    return [EstimatorSpec.js_known(2.0, sigma=1.3),
            EstimatorSpec.baranchik_known(rational_shrink(3.0), sigma=0.7),
            EstimatorSpec.js_unknown(3.0),
            EstimatorSpec.baranchik_unknown(saturating_linear(1 / 6, 1.0)),
            EstimatorSpec.generalized_bayes(BayesPriorSpec(0.0, 2.0, 5, 4))]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 20.0))
def test_scale_equivariance(seed, lam):
    rng = np.random.default_rng(seed)
    x, u = rng.standard_normal(5) * 2, rng.standard_normal(4)
    for spec in _specs():
        if spec.needs_residual:
            got = estimate(spec, lam * x, lam * u)
            want = lam * estimate(spec, x, u)
        else:
            scaled = EstimatorSpec.from_dict({**spec.to_dict(), "sigma": lam * spec.sigma})
            got, want = estimate(scaled, lam * x), lam * estimate(spec, x)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    x, u = rng.standard_normal(5) * 2, rng.standard_normal(4)
    o = special_ortho_group.rvs(5, random_state=rng)
    ou = special_ortho_group.rvs(4, random_state=rng)
    for spec in _specs():
        assert estimate(spec, o @ x, ou @ u) == pytest.approx(o @ estimate(spec, x, u),
                                                            rel=1e-9, abs=1e-12)


def test_zero_x_is_flagged_not_raised():
    out, flag = estimate_flagged(EstimatorSpec.js_known(3.0), np.zeros(5))
    assert flag and np.array_equal(out, np.zeros(5))
    out, flags = estimate_flagged(EstimatorSpec.js_unknown(3.0), np.array([[0.0, 0, 0], [1, 1, 1]]),
                                  np.ones((2, 2)))
    assert flags.tolist() == [True, False]
    assert np.all(np.isfinite(out))


def test_input_errors():
    with pytest.raises(MissingResidualError):
        estimate(EstimatorSpec.js_unknown(1.0), np.ones(3))
    with pytest.raises(MissingResidualError):
        baranchik_unknown_scale(np.ones(3), np.zeros(2), rational_shrink(1.0))
    with pytest.raises(DimensionMismatchError):
        js_unknown_scale(np.ones((3, 4)), np.ones((2, 2)), 1.0)
    with pytest.raises(ValueError):
        EstimatorSpec.js_known(-1.0)
    with pytest.raises(ValueError):
        EstimatorSpec("shrink_everything")


@pytest.mark.parametrize("fn", SHRINKS, ids=lambda f: f.kind)
def test_shrink_functions_bounded_monotone_and_differentiated(fn):
    t = np.logspace(-3, 3, 200)
    r = fn(t)
    assert np.all(r >= 0) and np.all(r <= fn.declared_upper_bound)
    assert np.all(np.diff(r) >= 0)
    h = 1e-6 * t
    fd = (fn(t + h) - fn(t - h)) / (2 * h)
    smooth = np.abs(t - 6.0) > 1e-3  # away from the saturating kink
    assert fn.r_prime(t)[smooth] == pytest.approx(fd[smooth], rel=1e-5, abs=1e-8)


def test_estimator_dict_round_trip():
    specs = _specs() + [EstimatorSpec.identity(),
                        EstimatorSpec.orthant(FaceRule("rational_face", 0.5), known_scale=True, sigma=2.0)]
    for spec in specs:
        back = EstimatorSpec.from_dict(spec.to_dict())
        assert back == spec
        assert back.label() == spec.label()
    assert ShrinkFn.from_dict(saturating_linear(0.2, 1.0).to_dict()) == saturating_linear(0.2, 1.0)
    with pytest.raises(ValueError):
        EstimatorSpec.from_dict({"variant": "js_known", "a": 1.0, "colour": "red"})


def test_orthant_overshoot_follows_the_formula():
    # small |P|^2: the factor 1 - c r_s / |P|^2 is negative and the output
    # points away from P(x), exactly as the estimator is defined
    x, u = np.array([0.5, 0.5, 0.25]), np.ones(3)
    c, tp = 3 / 5, x @ x
    want = (1 - c * 1.0 / tp) * x
    assert orthant_estimate(x, u, FaceRule("constant_face", 1.0)) == pytest.approx(want)
    assert np.all(want < 0)


def test_js_unknown_equals_known_when_residual_matches_scale():
    rng = np.random.default_rng(5)
    x, u = rng.standard_normal(6), rng.standard_normal(3)
    sigma = np.sqrt((u @ u) / 5)
    assert js_unknown_scale(x, u, 4.0) == pytest.approx(estimate(EstimatorSpec.js_known(4.0, sigma), x),
                                                        rel=1e-14)
