"""Symmetric-function calculus on eigenvalue cones.

The default operator is ``f(lam) = log P_{n-1}(lam) = sum_i log mu_i`` with
``mu_i = sum_{j != i} lam_j``, defined on the cone where every ``mu_i > 0``.
All functions broadcast over leading axes; the eigenvalue index is the last
axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConeViolation, PreconditionViolation, ToleranceViolation

DEFAULT_MARGIN = 1e-8


def mu_transform(lam):
    """Return ``mu`` with ``mu_i = sum_{j != i} lam_j`` along the last axis."""
    lam = np.asarray(lam, dtype=float)
    return lam.sum(axis=-1, keepdims=True) - lam


def inverse_mu_transform(mu):
    """Inverse of :func:`mu_transform` (requires n >= 2)."""
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[-1]
    return mu.sum(axis=-1, keepdims=True) / (n - 1) - mu


# --------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class ConeSpec:
    """Open symmetric cone with a scale-aware membership test.

    ``score`` maps eigenvalues to the quantity that must be positive
    (``min mu`` for the P_{n-1} cone, ``min lam`` for the positive orthant).
    """

    kind: str
    name: str
    score: Callable = field(repr=False)

    def contains(self, lam, margin=0.0):
        lam = np.asarray(lam, dtype=float)
        scale = 1.0 + np.abs(lam).max(axis=-1)
        return self.score(lam) > margin * scale

    def relative_margin(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.score(lam) / (1.0 + np.abs(lam).max(axis=-1))


PN_MINUS_1 = ConeSpec("PnMinus1", "P_{n-1}", lambda lam: mu_transform(lam).min(axis=-1))
GAMMA_N = ConeSpec("GammaN", "Gamma_n", lambda lam: np.asarray(lam).min(axis=-1))


def cone_contains(lam, cone: ConeSpec = PN_MINUS_1, margin: float = 0.0):
    return cone.contains(lam, margin)


def sample_cone(cone: ConeSpec, n: int, size, rng, low=1e-3, high=1e3):
    """Draw points of ``cone`` with log-uniform coordinates.

    For P_{n-1} the mu-coordinates are log-uniform in ``[low, high]^n`` and
    mapped back through the inverse mu-transform, which reaches strongly
    ill-conditioned spectra. Other cones sample the positive orthant, which
    every admissible cone contains.
    """
    shape = (size, n) if np.isscalar(size) else tuple(size) + (n,)
    logs = rng.uniform(np.log(low), np.log(high), size=shape)
    if cone.kind == "PnMinus1":
        return inverse_mu_transform(np.exp(logs))
    return np.exp(logs)


# --------------------------------------------------------------------------
# operator functions


def _log_pn1_value(lam):
    return np.log(mu_transform(lam)).sum(axis=-1)


def _log_pn1_gradient(lam):
    inv = 1.0 / mu_transform(lam)
    return inv.sum(axis=-1, keepdims=True) - inv


def _log_det_value(lam):
    return np.log(lam).sum(axis=-1)


def _log_det_gradient(lam):
    return 1.0 / np.asarray(lam, dtype=float)


@dataclass(frozen=True)
class OperatorFunction:
    name: str
    value_fn: Callable = field(repr=False)
    gradient_fn: Callable = field(repr=False)
    cone: ConeSpec = PN_MINUS_1

    def value(self, lam):
        return self.value_fn(np.asarray(lam, dtype=float))

    def gradient(self, lam):
        return self.gradient_fn(np.asarray(lam, dtype=float))


LOG_PN1 = OperatorFunction("log_P_n-1", _log_pn1_value, _log_pn1_gradient, PN_MINUS_1)
LOG_DET = OperatorFunction("sum_log_lambda", _log_det_value, _log_det_gradient, GAMMA_N)


def _require_cone(lam, f: OperatorFunction):
    inside = f.cone.contains(lam, 0.0)
    if not np.all(inside):
        bad = np.argwhere(~np.atleast_1d(inside))
        where = tuple(bad[0]) if bad.size else None
        raise ConeViolation(f"eigenvalues outside the {f.cone.name} cone", where=where)


def f_value(lam, f: OperatorFunction = LOG_PN1):
    _require_cone(lam, f)
    return f.value(lam)


def f_gradient(lam, f: OperatorFunction = LOG_PN1):
    _require_cone(lam, f)
    return f.gradient(lam)


def matrix_gradient(A, f: OperatorFunction = LOG_PN1):
    """Derivative of ``F(A) = f(lambda(A))`` with respect to the entries of A.

    Returns ``U diag(f_i(lambda)) U^*`` for ``A = U diag(lambda) U^*``, so that
    ``dF = trace(F dA)``.
    """
    A = np.asarray(A)
    lam, U = np.linalg.eigh(A)
    _require_cone(lam, f)
    fi = f.gradient(lam)
    return (U * fi[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


# --------------------------------------------------------------------------
# quantitative inequalities


@dataclass
class SubsolutionGap:
    lhs: float
    rhs: float
    hypothesis_holds: bool
    sum_inv_mu: float
    sum_inv_mu_bound_ok: bool | None
    gap_ok: bool | None


def subsolution_gap(lam, lam_sub, eps):
    """Compare ``sum f_i(lam)(lam_sub_i - lam_i)`` with ``(eps/2) sum 1/mu_i``.

    The claim ``lhs >= rhs`` (together with ``sum 1/mu_i >= 2n/eps``) is only
    asserted when ``min mu <= eps/(2n)``; otherwise the corresponding fields
    are ``None``.
    """
    lam = np.asarray(lam, dtype=float)
    lam_sub = np.asarray(lam_sub, dtype=float)
    n = lam.shape[-1]
    _require_cone(lam, LOG_PN1)
    _require_cone(lam_sub, LOG_PN1)
    if mu_transform(lam_sub).min() < eps:
        raise PreconditionViolation("min of the subsolution mu is below eps")
    mu = mu_transform(lam)
    fi = LOG_PN1.gradient(lam)
    lhs = float(np.dot(fi, lam_sub - lam))
    s = float(np.sum(1.0 / mu))
    rhs = 0.5 * eps * s
    hyp = bool(mu.min() <= eps / (2 * n))
    if hyp:
        return SubsolutionGap(lhs, rhs, True, s, s >= 2 * n / eps, lhs >= rhs)
    return SubsolutionGap(lhs, rhs, False, s, None, None)


def subsolution_gap_batch(lam, lam_sub, eps):
    """Vectorised form of :func:`subsolution_gap` returning violation masks."""
    n = lam.shape[-1]
    mu = mu_transform(lam)
    fi = LOG_PN1.gradient(lam)
    lhs = np.einsum("...i,...i->...", fi, lam_sub - lam)
    s = (1.0 / mu).sum(axis=-1)
    rhs = 0.5 * eps * s
    hyp = mu.min(axis=-1) <= eps / (2 * n)
    tol = 1e-12 * (1.0 + np.abs(lhs) + np.abs(rhs))
    return {
        "hypothesis": hyp,
        "gap_violation": hyp & (lhs < rhs - tol),
        "sum_bound_violation": hyp & (s < 2 * n / eps * (1 - 1e-12)),
    }


@dataclass
class DominanceReport:
    sum_f: float
    sum_f_lower: float
    sum_f_ok: bool
    min_ratio_ok: bool
    case_min_mu_large: bool
    max_mu: float
    max_mu_bound: float | None
    max_mu_ok: bool | None
    ratio: float
    ratio_bound: float | None
    ratio_ok: bool | None

    @property
    def passed(self):
        return all(v is not False for v in (self.sum_f_ok, self.min_ratio_ok, self.max_mu_ok, self.ratio_ok))


def dominance_bounds(lam, sigma, eps):
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    value = f_value(lam)
    if abs(value - sigma) > 1e-8:
        raise ToleranceViolation(f"f(lambda) = {value!r} differs from sigma = {sigma!r}")
    res = dominance_batch(lam[None, :], np.array([sigma]), eps)
    mu = mu_transform(lam)
    fi = LOG_PN1.gradient(lam)
    sum_f = float(fi.sum())
    large = bool(mu.min() > eps / (2 * n))
    max_bound = (2 * n) ** (n - 1) * np.exp(sigma) / eps ** (n - 1) if large else None
    ratio_bound = eps**n / ((2 * n) ** n * np.exp(sigma)) if large else None
    return DominanceReport(
        sum_f=sum_f,
        sum_f_lower=float(n * (n - 1) * np.exp(-sigma / n)),
        sum_f_ok=not bool(res["sum_f"][0]),
        min_ratio_ok=not bool(res["fi_lower"][0]),
        case_min_mu_large=large,
        max_mu=float(mu.max()),
        max_mu_bound=max_bound,
        max_mu_ok=(not bool(res["max_mu"][0])) if large else None,
        ratio=float(mu.min() / mu.max()),
        ratio_bound=ratio_bound,
        ratio_ok=(not bool(res["ratio"][0])) if large else None,
    )


def dominance_batch(lam, sigma, eps, rtol=1e-12):
    """Violation masks for the four dominance inequalities over a batch."""
    n = lam.shape[-1]
    mu = mu_transform(lam)
    fi = LOG_PN1.gradient(lam)
    sum_f = fi.sum(axis=-1)
    mn, mx = mu.min(axis=-1), mu.max(axis=-1)
    large = mn > eps / (2 * n)
    lower = n * (n - 1) * np.exp(-sigma / n)
    max_bound = (2 * n) ** (n - 1) * np.exp(sigma) / eps ** (n - 1)
    ratio_bound = eps**n / ((2 * n) ** n * np.exp(sigma))
    fi_lower = (mn / (n * mx))[..., None] * sum_f[..., None]
    return {
        "sum_f": sum_f < lower * (1 - rtol),
        "fi_lower": np.any(fi < fi_lower * (1 - rtol), axis=-1),
        "max_mu": large & (mx > max_bound * (1 + rtol)),
        "ratio": large & (mn / mx < ratio_bound * (1 - rtol)),
    }


def newton_maclaurin_gap(mu):
    """``sum 1/mu - n^{(n-2)/(n-1)} (sum mu / prod mu)^{1/(n-1)}``, relative.

    Nonnegative on the positive orthant. Computed in logs to avoid overflow of
    the product.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[-1]
    lhs = (1.0 / mu).sum(axis=-1)
    log_rhs = (n - 2) / (n - 1) * np.log(n) + (np.log(mu.sum(axis=-1)) - np.log(mu).sum(axis=-1)) / (n - 1)
    rhs = np.exp(log_rhs)
    return (lhs - rhs) / np.maximum(lhs, rhs)


def trace_pairing_gap(A, B, f: OperatorFunction = LOG_PN1):
    """``trace(F(A) B) - sum_i f_i^desc lambda_i^asc(B)`` (should be >= 0)."""
    F = matrix_gradient(A, f)
    lam = np.linalg.eigvalsh(A)
    fd = np.sort(f.gradient(lam), axis=-1)[..., ::-1]
    lb = np.linalg.eigvalsh(B)
    lhs = np.real(np.einsum("...ij,...ji->...", F, B))
    return lhs - np.sum(fd * lb, axis=-1)


def identity_suite(n, samples, rng, rtol_euler=1e-9, rtol_sum=1e-12):
    """Violation counts of the sampled identities and inequalities on ``P_{n-1}``.

    Checks the Euler identity ``sum f_i lam_i = n``, the trace identity
    ``sum f_i = (n-1) sum 1/mu_i``, the lower bound on ``sum f_i``, the
    Newton-Maclaurin inequality and the lower bound on each ``f_i``.
    """
    lam = sample_cone(PN_MINUS_1, n, samples, rng)
    mu = mu_transform(lam)
    fi = LOG_PN1.gradient(lam)
    sigma = LOG_PN1.value(lam)
    sum_f = fi.sum(axis=-1)
    euler = np.abs(np.einsum("...i,...i->...", fi, lam) - n) / n
    trace = np.abs(sum_f - (n - 1) * (1.0 / mu).sum(axis=-1)) / sum_f
    dom = dominance_batch(lam, sigma, 1.0)
    nm = newton_maclaurin_gap(mu)
    return {
        "n": n,
        "samples": samples,
        "euler": int((euler > rtol_euler).sum()),
        "trace": int((trace > rtol_sum).sum()),
        "sum_f_lower": int(dom["sum_f"].sum()),
        "newton_maclaurin": int((nm < -rtol_sum).sum()),
        "fi_lower": int(dom["fi_lower"].sum()),
        "max_euler_error": float(euler.max()),
        "max_trace_error": float(trace.max()),
        "min_newton_maclaurin_gap": float(nm.min()),
    }


# --------------------------------------------------------------------------
# structural conditions of a generic operator


@dataclass
class StructuralReport:
    name: str
    samples: int
    ellipticity_violations: int = 0
    concavity_violations: int = 0
    scaling_violations: int = 0
    growth_violations: int = 0
    examples: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not (
            self.ellipticity_violations or self.concavity_violations or self.scaling_violations or self.growth_violations
        )


def check_structural_conditions(f: OperatorFunction, samples: int, seed: int, n: int = 3):
    """Sampled check of ellipticity, concavity and the two growth conditions.

    * ellipticity: every ``f_i > 0``;
    * concavity: midpoint inequality along random segments inside the cone;
    * ``t -> f(t lam)`` stays bounded below along the ladder ``t = 2^k``;
    * ``t -> f(lam_1 + t, ..., lam_{n-1} + t, lam_n)`` increases along the ladder.
    """
    if samples < 1:
        raise PreconditionViolation("samples must be >= 1")
    rng = np.random.default_rng(seed)
    rep = StructuralReport(f.name, samples)
    lam = sample_cone(f.cone, n, samples, rng)
    lam2 = sample_cone(f.cone, n, samples, rng)

    with np.errstate(all="ignore"):
        grad = f.gradient(lam)
        bad = ~np.all(grad > 0, axis=-1)
        rep.ellipticity_violations = int(bad.sum())
        if bad.any():
            rep.examples["ellipticity"] = lam[bad][0].tolist()

        mid = 0.5 * (lam + lam2)
        fa, fb, fm = f.value(lam), f.value(lam2), f.value(mid)
        tol = 1e-12 * (1 + np.abs(fa) + np.abs(fb))
        bad = ~(fm >= 0.5 * (fa + fb) - tol)
        rep.concavity_violations = int(bad.sum())
        if bad.any():
            rep.examples["concavity"] = lam[bad][0].tolist()

        ladder = 2.0 ** np.arange(0, 21)
        base = f.value(lam)
        scaled = np.stack([f.value(t * lam) for t in ladder], axis=-1)
        bad = ~np.all(scaled >= base[:, None] - 1e-12 * (1 + np.abs(base[:, None])), axis=-1)
        rep.scaling_violations = int(bad.sum())
        if bad.any():
            rep.examples["scaling"] = lam[bad][0].tolist()

        shift = np.zeros(n)
        shift[:-1] = 1.0
        grown = np.stack([f.value(lam + t * shift) for t in np.concatenate([[0.0], ladder])], axis=-1)
        bad = ~np.all(np.diff(grown, axis=-1) > 0, axis=-1)
        rep.growth_violations = int(bad.sum())
        if bad.any():
            rep.examples["growth"] = lam[bad][0].tolist()
    return rep
