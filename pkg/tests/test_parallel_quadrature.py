import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steinshrink.errors import QuadratureError
from steinshrink.parallel import (
    BLOCK_SIZE, block_generator, block_ranges, check_seed, map_ordered, stable_mean_se)
from steinshrink.quadrature import adaptive_gk15, log_axis_integral


def test_block_streams_are_reproducible_and_distinct():
    a = block_generator(7, 3).standard_normal(5)
    b = block_generator(7, 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, block_generator(7, 4).standard_normal(5))
    assert not np.array_equal(a, block_generator(7, 3, stream=1).standard_normal(5))
    assert not np.array_equal(a, block_generator(8, 3).standard_normal(5))


def test_seed_range():
    assert check_seed(2 ** 64 - 1) == 2 ** 64 - 1
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(ValueError):
        check_seed(2 ** 64)


def test_block_ranges_cover_exactly():
    n = 3 * BLOCK_SIZE + 17
    ranges = block_ranges(n)
    assert ranges[0] == (0, 0, BLOCK_SIZE)
    assert ranges[-1][2] == n
    assert sum(stop - start for _, start, stop in ranges) == n


def test_map_ordered_keeps_order_for_any_thread_count():
    items = list(range(50))
    assert map_ordered(lambda i: i * i, items, 1) == map_ordered(lambda i: i * i, items, 4)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200), st.randoms())
def test_stable_mean_is_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert stable_mean_se(values) == stable_mean_se(shuffled)


def test_stable_mean_se_matches_numpy():
    x = np.random.default_rng(0).standard_normal(1000)
    mean, se = stable_mean_se(x)
    assert mean == pytest.approx(x.mean(), rel=1e-12)
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-12)


def test_gk15_polynomial_and_singular_integrands():
    res = adaptive_gk15(lambda t: t ** 21, [0.0, 1.0])
    assert float(res.value[0]) == pytest.approx(1 / 22, rel=1e-13)
    res = adaptive_gk15(lambda t: t ** -0.5, [0.0, 1.0], epsrel=1e-10)
    assert float(res.value[0]) == pytest.approx(2.0, rel=1e-9)


def test_gk15_vector_valued_shares_nodes():
    res = adaptive_gk15(lambda t: np.vstack([np.ones_like(t), t, t * t]), [0.0, 0.5, 2.0])
    assert res.value == pytest.approx([2.0, 2.0, 8 / 3], rel=1e-13)


def test_gk15_reports_failure():
    with pytest.raises(QuadratureError), np.errstate(all="ignore"):
        adaptive_gk15(lambda t: 1.0 / (t - 0.5) ** 2, [0.0, 1.0], limit=50)
    with pytest.raises(ValueError):
        adaptive_gk15(lambda t: t, [1.0, 0.0])


def test_log_axis_integral_gamma_function():
    # ∫ v^{s-1} e^{-v} dv = Γ(s), integrand on the log axis y = log v
    for s in (0.3, 2.5, 11.0):
        val = log_axis_integral(lambda y: s * y - np.exp(y))
        assert val == pytest.approx(math.lgamma(s), abs=1e-10)
