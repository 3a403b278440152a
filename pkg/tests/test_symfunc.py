import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nma import symfunc as sf
from nma.errors import ConeViolation, ToleranceViolation


def test_mu_transform_examples():
    np.testing.assert_allclose(sf.mu_transform([1, 1, 1]), [2, 2, 2])
    np.testing.assert_allclose(sf.mu_transform([3.0, -1.5]), [-1.5, 3.0])
    np.testing.assert_allclose(sf.mu_transform([1, 2, 3]), [5, 4, 3])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
def test_mu_transform_inverts(lam):
    lam = np.array(lam)
    back = sf.inverse_mu_transform(sf.mu_transform(lam))
    np.testing.assert_allclose(back, lam, atol=1e-9 * (1 + np.abs(lam).sum()))


def test_f_value_examples():
    assert sf.f_value([1, 1, 1]) == pytest.approx(3 * np.log(2))
    assert sf.f_value([1, 2]) == pytest.approx(np.log(2))
    assert sf.f_value([1, 2, 3]) == pytest.approx(np.log(60))
    assert sf.f_value([1, 2, 3]) == pytest.approx(4.09434, abs=1e-5)


def test_f_gradient_examples():
    np.testing.assert_allclose(sf.f_gradient([1, 1, 1]), [1, 1, 1])
    np.testing.assert_allclose(sf.f_gradient([1, 2, 3]), [7 / 12, 8 / 15, 9 / 20], rtol=1e-14)


def test_f_gradient_outside_cone_raises():
    with pytest.raises(ConeViolation):
        sf.f_gradient([1.0, 0.0, 0.0])


def test_cone_contains_examples():
    assert sf.cone_contains([0, 1, 1])
    assert not sf.cone_contains([1, 0, 0])
    assert not sf.cone_contains([-1, 1, 1])


def test_cone_margin_is_scale_aware():
    # min mu = 1e-3 clears an absolute margin of 1e-8 but not 1e-8 * (1 + |lam|)
    lam = np.array([1e6, 1e6, -1e6 + 1e-3])
    assert sf.cone_contains(lam, margin=0.0)
    assert sf.mu_transform(lam).min() > 1e-8
    assert not sf.cone_contains(lam, margin=1e-8)


def test_matrix_gradient_examples():
    np.testing.assert_allclose(sf.matrix_gradient(np.eye(3)), np.eye(3), atol=1e-14)
    F = sf.matrix_gradient(np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(F, np.diag([7 / 12, 8 / 15, 9 / 20]), atol=1e-14)


def _random_unitary(n, rng):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_matrix_gradient_is_unitarily_equivariant():
    rng = np.random.default_rng(1)
    for n in range(2, 7):
        lam = sf.sample_cone(sf.PN_MINUS_1, n, 1, rng, low=0.1, high=10)[0]
        V = _random_unitary(n, rng)
        A = V @ np.diag(lam) @ V.conj().T
        U = _random_unitary(n, rng)
        lhs = sf.matrix_gradient(U @ A @ U.conj().T)
        rhs = U @ sf.matrix_gradient(A) @ U.conj().T
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_matrix_gradient_repeated_block_invariance():
    rng = np.random.default_rng(2)
    base = np.diag([2.0, 2.0, 2.0, 5.0])
    F0 = sf.matrix_gradient(base)
    for _ in range(5):
        R = np.eye(4, dtype=complex)
        R[:3, :3] = _random_unitary(3, rng)
        np.testing.assert_allclose(sf.matrix_gradient(R @ base @ R.conj().T), F0, atol=1e-12)


def test_matrix_gradient_is_derivative():
    rng = np.random.default_rng(3)
    n = 4
    lam = sf.sample_cone(sf.PN_MINUS_1, n, 1, rng, low=0.5, high=5)[0]
    V = _random_unitary(n, rng)
    A = V @ np.diag(lam) @ V.conj().T
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    dA = (X + X.conj().T) / 2
    h = 1e-6
    fd = (sf.f_value(np.linalg.eigvalsh(A + h * dA)) - sf.f_value(np.linalg.eigvalsh(A - h * dA))) / (2 * h)
    assert np.real(np.trace(sf.matrix_gradient(A) @ dA)) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("n", range(2, 9))
def test_identity_suite_zero_violations(n):
    r = sf.identity_suite(n, 20000, np.random.default_rng(n))
    assert r["euler"] == r["trace"] == r["sum_f_lower"] == r["newton_maclaurin"] == r["fi_lower"] == 0


def test_subsolution_gap_worked_example():
    g = sf.subsolution_gap(np.array([10.0, 0.2]), np.array([1.0, 1.0]), 1.0)
    assert g.hypothesis_holds
    assert g.lhs == pytest.approx(3.1)
    assert g.rhs == pytest.approx(2.55)
    assert g.gap_ok and g.sum_inv_mu_bound_ok


def test_subsolution_gap_no_claim_when_hypothesis_fails():
    lam = np.array([1.0, 2.0, 3.0])
    g = sf.subsolution_gap(lam, lam, 0.1)
    assert not g.hypothesis_holds
    assert g.gap_ok is None


def test_subsolution_gap_batch_no_violations():
    rng = np.random.default_rng(4)
    for n in (2, 3, 5):
        lam = sf.sample_cone(sf.PN_MINUS_1, n, 5000, rng)
        lam_sub = sf.sample_cone(sf.PN_MINUS_1, n, 5000, rng, low=1.0, high=10.0)
        v = sf.subsolution_gap_batch(lam, lam_sub, 1.0)
        assert v["hypothesis"].any()
        assert not v["gap_violation"].any()
        assert not v["sum_bound_violation"].any()


def test_dominance_bounds_checks_sigma():
    lam = np.array([1.0, 2.0, 3.0])
    rep = sf.dominance_bounds(lam, np.log(60), 1.0)
    assert rep.passed
    with pytest.raises(ToleranceViolation):
        sf.dominance_bounds(lam, 0.0, 1.0)


def test_structural_conditions_builtin_pass():
    assert sf.check_structural_conditions(sf.LOG_PN1, 10000, 7).passed
    assert sf.check_structural_conditions(sf.LOG_DET, 10000, 7).passed


def test_structural_conditions_detects_non_elliptic():
    bad = sf.OperatorFunction("minus_sum_sq", lambda l: -(l**2).sum(-1), lambda l: -2 * l, sf.GAMMA_N)
    rep = sf.check_structural_conditions(bad, 1000, 0)
    assert rep.ellipticity_violations > 0
    assert not rep.passed


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_trace_pairing_inequality(n, seed):
    rng = np.random.default_rng(seed)
    lam = sf.sample_cone(sf.PN_MINUS_1, n, 1, rng, low=0.01, high=100)[0]
    V = _random_unitary(n, rng)
    A = V @ np.diag(lam) @ V.conj().T
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    B = (X + X.conj().T) / 2
    assert sf.trace_pairing_gap(A, B) >= -1e-10
