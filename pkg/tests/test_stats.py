import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmst.stats import (
    CorrelationCell,
    StatsError,
    pearson,
    regularized_incomplete_beta,
    student_t_cdf,
    student_t_two_sided_p,
)

mp.mp.dps = 30


def oracle_two_sided_p(t, df):
    return float(mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True))


def test_incomplete_beta_edges():
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0


def test_incomplete_beta_against_mpmath():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = float(rng.uniform(0.5, 30))
        b = float(rng.uniform(0.5, 30))
        x = float(rng.uniform(0, 1))
        expected = float(mp.betainc(a, b, 0, x, regularized=True))
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(expected, abs=1e-12)


def test_incomplete_beta_validation():
    with pytest.raises(StatsError):
        regularized_incomplete_beta(-1.0, 2.0, 0.5)
    with pytest.raises(StatsError):
        regularized_incomplete_beta(1.0, 2.0, 1.5)


def test_t_cdf_symmetry_and_median():
    assert student_t_cdf(0.0, 7) == 0.5
    for t in (0.3, 1.7, 4.2):
        assert student_t_cdf(t, 7) + student_t_cdf(-t, 7) == pytest.approx(1.0, abs=1e-14)


def test_t_cdf_against_oracle_grid():
    # the acceptance grid: r in {-0.99..0.99}, n in {4..40}
    for n in range(4, 41, 4):
        df = n - 2
        for r in np.linspace(-0.99, 0.99, 23):
            if abs(r) == 1.0:
                continue
            t = r * math.sqrt(df / (1.0 - r * r))
            assert student_t_two_sided_p(t, df) == pytest.approx(
                oracle_two_sided_p(t, df), abs=1e-9
            )


def test_perfect_positive_line():
    x = np.arange(10.0)
    cell = pearson(x, 2.0 * x + 3.0)
    assert cell.r == 1.0 and cell.p == 0.0


def test_perfect_negative_line():
    cell = pearson([1.0, 2.0, 3.0], [6.0, 5.0, 4.0])
    assert cell.r == -1.0 and cell.p == 0.0


def test_frozen_reference_pair():
    # oracle-computed for x=(1..5), y=(2,1,4,3,6): t works out to exactly 2.5
    cell = pearson([1, 2, 3, 4, 5], [2, 1, 4, 3, 6])
    assert cell.r == pytest.approx(0.8219949365267865, abs=1e-15)
    assert cell.p == pytest.approx(0.08770664700806555, abs=1e-12)
    assert cell.n == 5
    assert cell.stars == ""


def test_zero_variance_is_undefined_not_crash():
    cell = pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    assert not cell.defined
    assert cell.status == "zero variance"
    assert cell.formatted() == "n/a"


def test_pearson_validation():
    with pytest.raises(StatsError):
        pearson([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(StatsError):
        pearson([1.0, 2.0, 3.0], [1.0, 2.0])


def test_star_convention():
    assert CorrelationCell(0.9, 0.004, 10).stars == "**"
    assert CorrelationCell(0.9, 0.03, 10).stars == "*"
    assert CorrelationCell(0.9, 0.2, 10).stars == ""
    assert CorrelationCell(-0.64, 0.001, 24).formatted() == "-0.64**"


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=30),
    st.floats(0.1, 5.0),
    st.floats(-10.0, 10.0),
)
def test_exact_linear_dependence(xs, a, b):
    xs = np.asarray(xs)
    if np.ptp(xs) == 0:
        return
    up = pearson(xs, a * xs + b)
    down = pearson(xs, -a * xs + b)
    assert up.r == pytest.approx(1.0, abs=1e-12)
    assert down.r == pytest.approx(-1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_definitional_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 40))
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    cell = pearson(x, y)
    expected = float(
        np.sum((x - x.mean()) * (y - y.mean()))
        / np.sqrt(np.sum((x - x.mean()) ** 2) * np.sum((y - y.mean()) ** 2))
    )
    assert cell.r == pytest.approx(expected, abs=1e-12)


def test_symmetric_in_arguments():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    a, b = pearson(x, y), pearson(y, x)
    assert a.r == pytest.approx(b.r, abs=1e-15)
    assert a.p == pytest.approx(b.p, abs=1e-15)
