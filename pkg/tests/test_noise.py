import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timebin.noise import (
    VisibilityBudget,
    analytic_visibility_d,
    budget_from_factors,
    imbalance_db_to_ratio,
    multipair_rates,
    visibility_budget,
    visibility_misalignment,
    visibility_multipair,
    visibility_phase_noise,
)


def test_visibility_d_examples():
    assert analytic_visibility_d(1) == 0.0
    assert analytic_visibility_d(2) == pytest.approx(0.5)
    assert analytic_visibility_d(20) == pytest.approx(0.95)
    assert analytic_visibility_d(20, 0.916) == pytest.approx(0.8702)
    with pytest.raises(ValueError, match="d >= 1"):
        analytic_visibility_d(0)


def test_multipair_examples():
    # 1 / (1 + 0.05 - 0.00125), evaluated independently
    assert visibility_multipair(0.025, 20, 1.0) == pytest.approx(1 / 1.04875, abs=1e-12)
    assert visibility_multipair(0.025, 20, 1.0) == pytest.approx(0.953516, abs=1e-6)
    assert visibility_multipair(0.3, 20, 0.95) == pytest.approx(0.95 / 1.585, abs=1e-12)
    assert visibility_multipair(0.0, 7, 0.8) == 0.8


def test_multipair_rate_example():
    r = multipair_rates(0.1, 20)
    assert (r.r1, r.r2_same, r.r2_consecutive) == pytest.approx((1.0, 0.1, 0.095))
    assert r.total == pytest.approx(1.195)


@settings(max_examples=200)
@given(st.floats(0.0, 5.0), st.integers(1, 10_000), st.floats(0.0, 1.0))
def test_multipair_matches_rate_ratio(mu, d, v_d):
    rates = multipair_rates(mu, d)
    if rates.total == 0:
        return
    assert visibility_multipair(mu, d, v_d) == pytest.approx(v_d * rates.r1 / rates.total, abs=1e-12)


@settings(max_examples=100)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(1, 500))
def test_multipair_decreasing_in_mu(mu1, mu2, d):
    lo, hi = sorted((mu1, mu2))
    assert visibility_multipair(hi, d, 1.0) <= visibility_multipair(lo, d, 1.0) + 1e-15


def test_multipair_large_d_limit():
    assert visibility_multipair(0.2, 10**6, 1.0) == pytest.approx(1 / 1.4, abs=1e-6)


def test_phase_noise_examples():
    assert visibility_phase_noise(1.0, 0.1, 1) == pytest.approx(0.995012, abs=1e-6)
    assert visibility_phase_noise(1.0, 0.1, 100) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert visibility_phase_noise(0.95, 0.2, 1) == pytest.approx(0.95 * math.exp(-0.02))
    with pytest.raises(ValueError):
        visibility_phase_noise(1.0, 0.1, 0)


def test_misalignment_examples():
    r = 10 ** (-0.15)
    t_s = 1 / math.sqrt(1 + r)
    t_l = math.sqrt(r) * t_s
    assert visibility_misalignment(t_s, t_l) == pytest.approx(2 * r / (1 + r * r), abs=1e-12)
    assert visibility_misalignment(t_s, t_l) == pytest.approx(0.9431, abs=1e-4)
    assert visibility_misalignment(0.5, 0.5) == 1.0


@pytest.mark.parametrize("db", [1.0, 1.25, 1.5])
def test_misalignment_quoted_range(db):
    ratio = imbalance_db_to_ratio(db)
    assert visibility_misalignment(1.0, ratio) == pytest.approx(0.96, abs=0.02)


@settings(max_examples=100)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 100.0))
def test_misalignment_scale_and_swap(t_s, t_l, k):
    v = visibility_misalignment(t_s, t_l)
    assert 0.0 <= v <= 1.0 + 1e-15
    assert visibility_misalignment(t_l, t_s) == pytest.approx(v, abs=1e-12)
    assert visibility_misalignment(k * t_s, k * t_l) == pytest.approx(v, abs=1e-12)


def test_budget_quoted_factors():
    b = budget_from_factors(0.97, 0.96, 0.99)
    assert b.v_max == pytest.approx(0.921888, abs=1e-12)
    assert b.v_total == pytest.approx(0.921888, abs=1e-12)
    assert round(b.v_total, 4) == 0.9219
    assert abs(b.v_total - 0.916) <= 0.012 + 0.016


def test_budget_composition():
    b = visibility_budget(20, mu=0.025, t_s=1.0, t_l=imbalance_db_to_ratio(1.25), v_residual=0.99)
    expected = 0.95 / 1.04875 * visibility_misalignment(1.0, imbalance_db_to_ratio(1.25)) * 0.99
    assert b.v_total == pytest.approx(expected, abs=1e-12)
    assert b.v_d == pytest.approx(0.95)
    limit = visibility_budget(None, mu=0.1)
    assert limit.v_d == 1.0 and limit.v_multipair == pytest.approx(1 / 1.2)


def test_budget_rejects_out_of_range():
    with pytest.raises(ValueError):
        VisibilityBudget(1.0, 1.2, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        visibility_budget(None, mu=-0.1)
