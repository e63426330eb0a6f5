import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vcgrid.analytics import (REFERENCE, CostInput, TimeoutModelInput, cost_compare, expected_times,
                              store_overhead, theory_vs_sim)


def reference_input(p):
    return TimeoutModelInput(n_s=2000, n_c=5, n_tc=2, p=p, t_e=2.4, t_o=5.0)


def test_timeout_model_reference_values():
    est = expected_times(reference_input(0.05))
    assert est.n == 200
    assert est.expected_extra_min == pytest.approx(50.0, abs=1e-9)
    assert est.expected_total_min == pytest.approx(480.0 + 50.0)
    assert expected_times(reference_input(0.20)).expected_extra_min == pytest.approx(200.0, abs=1e-9)
    zero = expected_times(reference_input(0.0))
    assert zero.expected_extra_min == 0 and zero.expected_total_min == pytest.approx(480.0)


def test_timeout_model_validation():
    with pytest.raises(ValueError):
        TimeoutModelInput(2000, 0, 2, 0.1, 2.4, 5)
    with pytest.raises(ValueError):
        TimeoutModelInput(2000, 5, 2, 1.1, 2.4, 5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 20))
def test_timeout_model_linearity(p1, p2, t_o):
    a = expected_times(TimeoutModelInput(2000, 5, 2, p1, 2.4, t_o))
    b = expected_times(TimeoutModelInput(2000, 5, 2, p2, 2.4, t_o))
    assert a.expected_total_min - a.expected_extra_min == pytest.approx(b.expected_total_min - b.expected_extra_min)
    doubled = expected_times(TimeoutModelInput(2000, 5, 2, p1, 2.4, 2 * t_o))
    assert doubled.expected_extra_min == pytest.approx(2 * a.expected_extra_min)


def test_cost_reference_values():
    cmp = cost_compare(CostInput(8, 1.67, 0.50))
    assert round(cmp.cost_standard, 2) == 13.36 and round(cmp.cost_standard, 1) == 13.4
    assert round(cmp.cost_preemptible, 2) == 4.00
    assert round(cmp.saving_fraction, 4) == 0.7006
    assert cost_compare(CostInput(3, 1.0, 1.0)).saving_fraction == 0.0


@given(st.floats(0, 1e4), st.floats(0.01, 100), st.floats(0.01, 1))
def test_cost_invariants(hours, rate, fraction):
    cmp = cost_compare(CostInput(hours, rate, rate * fraction))
    assert cmp.cost_preemptible <= cmp.cost_standard + 1e-9
    assert 0.0 <= cmp.saving_fraction < 1.0


def test_cost_validation():
    with pytest.raises(ValueError):
        CostInput(1, 0.5, 1.0)


def test_store_overhead_reference_values():
    assert store_overhead(2000, 1.29, 0.87) == pytest.approx(840.0)
    assert store_overhead(2000, 1.29, 0.87) / 60 == pytest.approx(14.0)
    big = store_overhead(1_600_000, 1.29, 0.87)
    assert big == pytest.approx(672_000.0)
    assert round(big / 3600) == 187
    assert store_overhead(500, 1.0, 1.0) == 0.0


def test_store_overhead_negative_warns():
    with pytest.warns(UserWarning):
        assert store_overhead(10, 0.5, 1.0) == pytest.approx(-5.0)
    with pytest.raises(ValueError):
        store_overhead(-1, 1.29, 0.87)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_store_overhead_linear(a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        total = store_overhead(a + b, 1.29, 0.87)
    assert total == pytest.approx(store_overhead(a, 1.29, 0.87) + store_overhead(b, 1.29, 0.87))


def test_theory_vs_sim():
    assert theory_vs_sim(50, 50) == 0
    assert theory_vs_sim(50, 60) == pytest.approx(0.2)
    assert theory_vs_sim(0, 3.5) == 3.5


def test_reference_table_matches_model():
    ref = REFERENCE
    est = expected_times(TimeoutModelInput(ref["n_s"], ref["n_c"], ref["n_tc"], ref["p_low"],
                                           ref["t_e_min"], ref["t_o_min"]))
    assert est.expected_extra_min == pytest.approx(ref["extra_low_min"])
