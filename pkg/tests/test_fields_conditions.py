import numpy as np
import pytest

from steinshrink.conditions import (
    check_domination_condition, check_residual_domination_condition, discrete_laplacian,
    inverse_square_norm, minimax_a_bound, radial_grid)
from steinshrink.errors import InfiniteExpectationError
from steinshrink.fields import (
    SingularPointError, baranchik_field, catalogued_fields, constant_field, d_usq_fd, divergence,
    divergence_fd, field_from_dict, js_field, linear_field, residual_baranchik_field)
from steinshrink.models import ModelSpec
from steinshrink.shrinkage import constant_shrink, rational_shrink, saturating_linear


def _points(p, n=100, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, p))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(0.5, 10.0, n)[:, None]


@pytest.mark.parametrize("p", [3, 5, 8])
def test_divergence_matches_finite_differences(p):
    x = _points(p)
    usq = np.random.default_rng(1).uniform(0.5, 20.0, len(x))
    for fld in catalogued_fields(p):
        s = usq if fld.u_dependent else None
        exact = divergence(fld, x, s)
        fd = divergence_fd(fld, x, usq=s)
        tol = np.maximum(1e-6, 1e-4 * np.abs(fd))
        assert np.all(np.abs(exact - fd) <= tol), fld.name
        if fld.u_dependent:
            assert fld.d_usq(x, usq) == pytest.approx(d_usq_fd(fld, x, usq), rel=1e-5, abs=1e-9)


def test_divergence_examples():
    x = np.array([1.0, 2.0, -0.5, 0.3])
    t = x @ x
    assert divergence(js_field(1.7), x) == pytest.approx(-1.7 * 2 / t, rel=1e-14)
    assert divergence(constant_field([1.0, 2, 3, 4]), x) == 0.0
    # r(t) = t/(1+t), p = 4, t = 1
    fld = baranchik_field(rational_shrink(1.0))
    assert divergence(fld, np.array([1.0, 0, 0, 0])) == pytest.approx(-1.5, rel=1e-15)
    assert divergence_fd(fld, np.array([1.0, 0, 0, 0])) == pytest.approx(-1.5, abs=1e-6)
    A = np.arange(16.0).reshape(4, 4)
    assert divergence(linear_field(A), x) == pytest.approx(np.trace(A))


def test_divergence_errors():
    with pytest.raises(SingularPointError):
        divergence(js_field(1.0), np.zeros(3))
    with pytest.raises(ValueError):
        divergence_fd(js_field(1.0), np.ones(3), step=0.0)
    with pytest.raises(ValueError):
        field_from_dict({"kind": "spiral"})


@pytest.mark.parametrize("p", [4, 5, 7])
def test_domination_condition_js(p):
    grid = radial_grid(p)
    for c in (0.5, 1.0, 2.3):
        boundary = check_domination_condition(js_field(2 * (p - 2) * c), c, grid)
        assert boundary.passed and not boundary.strictly_negative
        inside = check_domination_condition(js_field((p - 2) * c), c, grid)
        assert inside.passed and inside.strictly_negative and inside.max_value < 0
        outside = check_domination_condition(js_field(3 * (p - 2) * c), c, grid)
        assert not outside.passed and outside.max_value > 0
    with pytest.raises(ValueError):
        check_domination_condition(js_field(1.0), 0.0, grid)


@pytest.mark.parametrize("shrink", [constant_shrink(6.0), saturating_linear(0.3, 6.0),
                                    rational_shrink(6.0), rational_shrink(2.5)],
                         ids=lambda s: f"{s.kind}{s.params}")
def test_baranchik_condition_algebra(shrink):
    # r nondecreasing with 0 <= r <= 2(p-2), p = 5: r^2/t - 2(p-2) r/t - 4 r' <= 0
    p = 5
    report = check_domination_condition(baranchik_field(shrink), 1.0, radial_grid(p))
    assert report.passed
    x = radial_grid(p)
    t = np.einsum("ij,ij->i", x, x)
    r = shrink(t)
    assert np.all(r ** 2 / t - 2 * (p - 2) * r / t - 4 * shrink.r_prime(t) <= 1e-12 * (1 + r / t))


def test_residual_condition():
    p, k = 5, 4
    grid, usq = radial_grid(p, n_radii=30, n_directions=10), np.logspace(-2, 3, 12)
    bound = 2 * (p - 2) / (k + 2)
    for shrink in (rational_shrink(bound), saturating_linear(1 / (k + 2), bound)):
        assert check_residual_domination_condition(residual_baranchik_field(shrink, k), grid, usq, k).passed
        too_big = type(shrink).from_dict({**shrink.to_dict(), "bound": 2 * bound})
        assert not check_residual_domination_condition(
            residual_baranchik_field(too_big, k), grid, usq, k).passed
    # a field that ignores u reduces to the plain check with c = 1
    js = js_field(p - 2)
    plain = check_domination_condition(js, 1.0, grid)
    resid = check_residual_domination_condition(js, grid, usq, k)
    assert resid.max_value == pytest.approx(plain.max_value)


@pytest.mark.parametrize("p", [5, 6, 8])
def test_inverse_square_norm_is_superharmonic(p):
    x = _points(p, seed=p)
    assert np.max(discrete_laplacian(inverse_square_norm, x, 1e-3)) <= 1e-6


def test_inverse_square_norm_is_harmonic_in_four_dimensions():
    # the exact Laplacian vanishes for p = 4; what remains is O(h^2) truncation
    x = _points(4, seed=4)
    coarse = np.max(np.abs(discrete_laplacian(inverse_square_norm, x, 2e-3)))
    fine = np.max(np.abs(discrete_laplacian(inverse_square_norm, x, 1e-3)))
    assert fine < 1e-3
    assert 3.0 < coarse / fine < 5.0


def test_minimax_a_bound():
    assert minimax_a_bound(ModelSpec.normal(4)).value == pytest.approx(0.5, rel=1e-15)
    assert minimax_a_bound(ModelSpec.normal(6)).value == pytest.approx(2 / 3, rel=1e-15)
    mc = minimax_a_bound(ModelSpec.normal(6), n_mc=200_000, seed=3, method="mc")
    assert abs(mc.value - 2 / 3) <= 3 * mc.std_error
    t5 = minimax_a_bound(ModelSpec.student_t(5, 6), n_mc=10 ** 6, seed=1)
    assert t5.method == "mc" and t5.value > 0 and 0 < t5.std_error < 1e-2
    with pytest.raises(InfiniteExpectationError):
        minimax_a_bound(ModelSpec.normal(2))
    with pytest.raises(ValueError):
        minimax_a_bound(ModelSpec.normal(3))
