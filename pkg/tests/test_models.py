import math

import numpy as np
import pytest
from scipy import integrate, stats

from steinshrink.errors import NonfiniteMomentError
from steinshrink.models import (
    MixingLaw, ModelSpec, RadialLaw, mixture_q_lower_bound, posterior_mean_V, q_function,
    sample_joint)
from steinshrink.parallel import stable_mean_se

TWO_POINT = MixingLaw.discrete([1.0, 2.0], [0.5, 0.5])


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec.normal(0)
    with pytest.raises(ValueError):
        ModelSpec.normal(3, sigma=0.0)
    with pytest.raises(ValueError):
        ModelSpec.student_t(0.0, 3)
    with pytest.raises(ValueError):
        ModelSpec.normal(3, theta=[1.0, 2.0])
    with pytest.raises(ValueError):
        MixingLaw.discrete([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ValueError):
        MixingLaw.discrete([0.0, 2.0])


def test_model_round_trip():
    for m in (ModelSpec.normal(3, 2, 1.5, [1, 2, 3]), ModelSpec.student_t(5, 4, 2),
              ModelSpec.scale_mixture(TWO_POINT, 4, 1),
              ModelSpec.scale_mixture(MixingLaw.lognormal(0.1, 0.4), 3)):
        assert ModelSpec.from_dict(m.to_dict()) == m


def test_sample_rejects_zero_n():
    with pytest.raises(ValueError):
        sample_joint(ModelSpec.normal(3), 0, 1)


def test_normal_squared_norm_mean():
    b = sample_joint(ModelSpec.normal(3), 10 ** 6, 11)
    mean, se = stable_mean_se(np.einsum("ij,ij->i", b.x, b.x))
    assert abs(mean - 3.0) <= 3 * se


def test_batches_are_bit_identical_across_threads():
    m = ModelSpec.student_t(5, 4, 2, theta=[1, 0, 0, 2])
    a = sample_joint(m, 50_000, 3, threads=1)
    b = sample_joint(m, 50_000, 3, threads=4)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)
    c = sample_joint(m, 50_000, 4, threads=1)
    assert not np.array_equal(a.x, c.x)


def test_degenerate_mixture_equals_normal_in_law():
    a = sample_joint(ModelSpec.scale_mixture(MixingLaw.point_mass(2.25), 3, 1), 100_000, 5)
    b = sample_joint(ModelSpec.normal(3, 1, sigma=1.5), 100_000, 6)
    ra = np.einsum("ij,ij->i", a.x, a.x) + a.usq
    rb = np.einsum("ij,ij->i", b.x, b.x) + b.usq
    assert stats.ks_2samp(ra, rb).statistic < 0.01


def test_student_t_covariance():
    b = sample_joint(ModelSpec.student_t(5, 4, 2), 10 ** 6, 7)
    # per-coordinate variance df/(df-2); each coordinate's mean of X_i^2
    for i in range(4):
        mean, se = stable_mean_se(b.x[:, i] ** 2)
        assert abs(mean - 5 / 3) <= 3 * se
    off = stable_mean_se(b.x[:, 0] * b.x[:, 1])
    assert abs(off[0]) <= 3 * off[1]


def test_spherical_symmetry_under_rotation():
    b = sample_joint(ModelSpec.student_t(6, 3, 2), 100_000, 9)
    z = np.hstack([b.x, b.u])
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 5)))
    rot = z @ q.T
    # radial law unchanged; a fixed coordinate keeps its marginal
    assert stats.ks_2samp(np.einsum("ij,ij->i", z, z), np.einsum("ij,ij->i", rot, rot)).statistic < 0.01
    assert stats.ks_2samp(z[:50_000, 0], rot[50_000:, 0]).statistic < 0.01


def test_normal_q_is_constant():
    for sigma in (0.5, 1.0, 3.0):
        q = q_function(RadialLaw.of(ModelSpec.normal(4, 2, sigma)), np.logspace(-3, 3, 40))
        assert np.all(np.abs(q - sigma ** 2) <= 1e-8 * sigma ** 2)


def test_student_t_q_against_numerical_tail():
    m = ModelSpec.student_t(5, 4, 2)
    radial = RadialLaw.of(m)
    for t in (0.0, 1.0, 10.0):
        tail = integrate.quad(lambda s: radial.f(s), t, np.inf, epsrel=1e-12)[0]
        assert q_function(radial, t) == pytest.approx(0.5 * tail / radial.f(t), rel=1e-8)


def test_student_t_matches_inverse_gamma_mixture():
    t = ModelSpec.student_t(5, 4, 2)
    mix = ModelSpec.scale_mixture(MixingLaw.inverse_gamma(2.5, 2.5), 4, 2)
    grid = np.array([0.0, 0.5, 3.0, 20.0])
    assert q_function(RadialLaw.of(mix), grid) == pytest.approx(
        q_function(RadialLaw.of(t), grid), rel=1e-8)
    assert RadialLaw.of(mix).log_f(grid) == pytest.approx(RadialLaw.of(t).log_f(grid), rel=1e-10)


def test_radial_law_shape():
    radial = RadialLaw.of(ModelSpec.scale_mixture(TWO_POINT, 3, 1))
    t = np.linspace(0, 60, 61)
    f, F = radial.f(t), radial.F(t)
    assert np.all(f > 0)
    assert np.all(np.diff(F) <= 0) and F[-1] < 1e-5 * F[0]


def test_two_point_mixture_bound_and_q():
    assert mixture_q_lower_bound(TWO_POINT, 4) == pytest.approx(1.2, rel=1e-14)
    radial = RadialLaw(ModelSpec.scale_mixture(TWO_POINT, 4), 4)
    assert q_function(radial, 0.0) == pytest.approx(1.2, rel=1e-12)
    grid = np.linspace(0, 100, 201)
    q = q_function(radial, grid)
    assert np.all(q >= 1.2 - 1e-8)
    assert posterior_mean_V(TWO_POINT, 4, grid) == pytest.approx(q, rel=1e-10)
    assert posterior_mean_V(TWO_POINT, 4, 10.0) >= 1.2


def test_point_mass_posterior_mean():
    law = MixingLaw.point_mass(1.7)
    assert mixture_q_lower_bound(law, 5) == pytest.approx(1.7)
    assert posterior_mean_V(law, 5, np.array([0.0, 3.0, 50.0])) == pytest.approx(1.7)


def test_posterior_mean_monotone_for_continuous_laws():
    grid = np.linspace(0, 50, 51)
    for law in (MixingLaw.inverse_gamma(3.0, 2.0), MixingLaw.gamma(3.0, 1.0),
                MixingLaw.lognormal(0.0, 0.5)):
        ev = posterior_mean_V(law, 4, grid)
        assert np.all(np.diff(ev) >= -1e-10)
        assert ev[0] == pytest.approx(mixture_q_lower_bound(law, 4), rel=1e-8)


def test_continuous_moments():
    law = MixingLaw.gamma(3.0, 2.0)
    assert law.moment(1.0) == pytest.approx(6.0, rel=1e-10)
    assert law.moment(-1.0) == pytest.approx(1 / 4, rel=1e-10)
    ig = MixingLaw.inverse_gamma(2.5, 2.5)
    assert ig.moment(1.0) == pytest.approx(5 / 3, rel=1e-10)
    with pytest.raises(NonfiniteMomentError):
        ig.moment(3.0)
    with pytest.raises(NonfiniteMomentError):
        mixture_q_lower_bound(MixingLaw.gamma(1.0, 1.0), 4)


def test_per_coordinate_variance():
    assert ModelSpec.student_t(5, 3).per_coordinate_variance() == pytest.approx(5 / 3)
    assert ModelSpec.student_t(2, 3).per_coordinate_variance() == math.inf
    assert ModelSpec.scale_mixture(TWO_POINT, 3).per_coordinate_variance() == pytest.approx(1.5)
