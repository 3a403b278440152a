import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nma import bordered as bd
from nma.errors import PreconditionViolation


def test_growth_threshold_examples():
    B = bd.BorderedHermitian([0.0], [1.0], 0.0)
    assert bd.growth_threshold(B, 0.1, "A1") == pytest.approx(10.0)
    for n in (2, 3, 5):
        Z = bd.BorderedHermitian(np.zeros(n - 1), np.zeros(n - 1), 0.0)
        assert bd.growth_threshold(Z, 0.7, "A1") == pytest.approx((n - 2) * 0.7 / (2 * n - 3))
    B3 = bd.BorderedHermitian([1.0, -1.0], [1.0, 1.0], 0.0)
    assert bd.growth_threshold(B3, 1.0, "A2") == pytest.approx(5.0)


def test_eigen_oracle_examples():
    B = bd.BorderedHermitian([0.0], [1.0], 10.0)
    lam = bd.eigen_oracle(B)
    np.testing.assert_allclose(lam, [5 - np.sqrt(26), 5 + np.sqrt(26)], rtol=1e-14)
    np.testing.assert_allclose(lam, bd.closed_form_2x2(0.0, 1.0, 10.0), rtol=1e-14)
    assert lam[0] == pytest.approx(-0.09902, abs=1e-5)
    D = bd.BorderedHermitian([3.0, -1.0, 2.0], [0, 0, 0], 0.5)
    np.testing.assert_allclose(bd.eigen_oracle(D), [-1.0, 0.5, 2.0, 3.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_trace_identity(n, seed):
    rng = np.random.default_rng(seed)
    d, a, _ = bd.random_instances(n, 1, rng)
    B = bd.BorderedHermitian(d[0], a[0], float(rng.uniform(-5, 5)))
    assert bd.eigen_oracle(B).sum() == pytest.approx(d.sum() + B.corner, abs=1e-12 * (1 + np.abs(d).sum()))


def test_bounds_check_worked_example():
    B = bd.BorderedHermitian([0.0], [1.0], 10.0)
    rep = bd.eigen_bounds_check(B, 0.1, "A1")
    assert rep.passed
    assert rep.margins["low"] == pytest.approx(0.1 - (np.sqrt(26) - 5))


def test_bounds_check_zero_border_margin_eps():
    B = bd.BorderedHermitian([0.5, -0.3, 1.2], [0, 0, 0], 0.0)
    thr = bd.growth_threshold(B, 0.2, "A1")
    rep = bd.eigen_bounds_check(B.with_corner(thr), 0.2, "A1")
    assert rep.passed
    assert rep.margins["low"] == pytest.approx(0.2)


def test_bounds_check_rejects_corner_below_threshold():
    with pytest.raises(PreconditionViolation):
        bd.eigen_bounds_check(bd.BorderedHermitian([0.0], [1.0], 5.0), 0.1, "A1")


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_sweep_bounds_no_violations(n):
    res = bd.sweep_bounds(n, 2000, np.random.default_rng(n))
    assert all(r["violations"] == 0 for r in res.values())


def test_scaled_corner_stays_above_negative_threshold():
    thr = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(bd.scaled_corner(thr, 10.0), [16.0, 0.0, 30.0])
    assert np.all(bd.scaled_corner(thr, 1.0) == thr)


def test_cardinality_well_separated_zero_border():
    B = bd.BorderedHermitian([-3.0, 0.0, 0.0, 4.0], np.zeros(4), 0.0)
    thr = bd.growth_threshold(B, 0.5, "A1")
    counts = bd.cardinality_profile(B, 0.5, np.geomspace(max(thr, 1e-3), 100, 20))
    assert np.all(counts == [1, 2, 1])


def test_cardinality_2x2_example():
    B = bd.BorderedHermitian([0.0], [1.0], 10.0)
    counts = bd.cardinality_profile(B, 0.1, [10.0, 20.0, 100.0])
    assert np.all(counts[:, 0] == 1)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_cardinality_constant_for_n_at_least_3(n):
    res = bd.sweep_cardinality(n, 1000, np.random.default_rng(n))
    assert res["nonconstant"] == 0
    assert res["wrong_count"] == 0
