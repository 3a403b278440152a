"""Eigenvalue localisation for bordered Hermitian matrices.

A bordered matrix has a real diagonal block ``diag(d)``, a complex border
column ``a`` and a real corner entry.  Once the corner dominates
``sum |a_i|^2`` quadratically, the lower ``n-1`` eigenvalues stay within
``eps`` of the diagonal entries and the top eigenvalue tracks the corner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionViolation

SLACK = 1e-12
LEMMAS = ("A1", "A2")


@dataclass
class BorderedHermitian:
    d: np.ndarray
    a: np.ndarray
    corner: float

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        self.a = np.asarray(self.a, dtype=complex).reshape(-1)
        if self.d.shape != self.a.shape:
            raise ValueError("d and a must have the same length")
        self.corner = float(self.corner)

    @property
    def n(self):
        return self.d.size + 1

    def matrix(self):
        n = self.n
        A = np.zeros((n, n), dtype=complex)
        A[np.arange(n - 1), np.arange(n - 1)] = self.d
        A[:-1, -1] = self.a
        A[-1, :-1] = np.conj(self.a)
        A[-1, -1] = self.corner
        return A

    def with_corner(self, corner):
        return BorderedHermitian(self.d, self.a, corner)


def assemble(d, a, corner):
    """Batched assembly: ``d``, ``a`` of shape (..., n-1), ``corner`` (...)."""
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=complex)
    m = d.shape[-1]
    A = np.zeros(d.shape[:-1] + (m + 1, m + 1), dtype=complex)
    idx = np.arange(m)
    A[..., idx, idx] = d
    A[..., :m, m] = a
    A[..., m, :m] = np.conj(a)
    A[..., m, m] = corner
    return A


def threshold_values(d, a, eps, lemma):
    """Right-hand side of the selected quadratic growth condition (batched)."""
    d = np.asarray(d, dtype=float)
    a2 = np.sum(np.abs(np.asarray(a)) ** 2, axis=-1)
    n = d.shape[-1] + 1
    if lemma == "A1":
        k = 2 * n - 3
        return k / eps * a2 + (n - 1) * np.abs(d).sum(axis=-1) + (n - 2) * eps / k
    if lemma == "A2":
        return a2 / eps + np.sum(d + (n - 2) * np.abs(d), axis=-1) + (n - 2) * eps
    raise ValueError(f"unknown lemma {lemma!r}")


def growth_threshold(B: BorderedHermitian, eps: float, lemma: str = "A1") -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(threshold_values(B.d, B.a, eps, lemma))


def eigen_oracle(B: BorderedHermitian):
    """Brute-force spectrum in ascending order."""
    return np.linalg.eigvalsh(B.matrix())


def closed_form_2x2(d1, a1, corner):
    disc = np.sqrt((corner - d1) ** 2 + 4 * np.abs(a1) ** 2)
    return np.array([(corner + d1 - disc) / 2, (corner + d1 + disc) / 2])


def nearest_assignment(lam_low, d):
    """Index of the nearest diagonal entry for each eigenvalue; ties go low."""
    dist = np.abs(lam_low[..., :, None] - d[..., None, :])
    return np.argmin(dist, axis=-1)


def bounds_margins(lam, d, corner, eps, lemma):
    """Signed margins of every inequality (positive means satisfied).

    Returns a dict of arrays over the batch: ``low`` (min over alpha of
    ``eps - |lam_alpha - d|`` under the lemma's assignment), ``top_lower``
    (``lam_n - corner``) and ``top_upper`` (distance below the upper bound).
    For A2 the upper bound carries the extra ``|sum(d - d_picked)|`` term;
    ``top_upper_plain`` always measures against ``corner + (n-1) eps``.
    """
    n = d.shape[-1] + 1
    low = lam[..., :-1]
    top = lam[..., -1]
    if lemma == "A1":
        ds = np.sort(d, axis=-1, kind="stable")
        dev = np.abs(low - ds)
        upper = corner + (n - 1) * eps
    else:
        idx = nearest_assignment(low, d)
        picked = np.take_along_axis(d, idx, axis=-1)
        dev = np.abs(low - picked)
        upper = corner + (n - 1) * eps + np.abs(np.sum(d - picked, axis=-1))
    return {
        "low": eps - dev.max(axis=-1),
        "top_lower": top - corner,
        "top_upper": upper - top,
        "top_upper_plain": corner + (n - 1) * eps - top,
    }


@dataclass
class BoundsReport:
    lemma: str
    eps: float
    threshold: float
    eigenvalues: np.ndarray
    margins: dict = field(default_factory=dict)
    passed: bool = True


def eigen_bounds_check(B: BorderedHermitian, eps: float, lemma: str = "A1") -> BoundsReport:
    thr = growth_threshold(B, eps, lemma)
    if B.corner < thr:
        raise PreconditionViolation(f"corner {B.corner!r} below the {lemma} threshold {thr!r}")
    lam = eigen_oracle(B)
    m = bounds_margins(lam, B.d, B.corner, eps, lemma)
    margins = {k: float(v) for k, v in m.items()}
    ok = margins["low"] > -SLACK and margins["top_lower"] >= -SLACK and margins["top_upper"] > -SLACK
    return BoundsReport(lemma, eps, thr, lam, margins, bool(ok))


def interval_components(d, eps):
    """Connected components of the union of ``(d_a - r, d_a + r)``, ``r = eps/(2n-3)``.

    Returns ``(components, sizes)``: a list of open intervals ``(lo, hi)`` in
    increasing order and the number of ``d`` entries per component.
    """
    d = np.sort(np.asarray(d, dtype=float))
    n = d.size + 1
    r = eps / (2 * n - 3)
    comps, sizes = [], []
    lo, hi, count = d[0] - r, d[0] + r, 1
    for x in d[1:]:
        if x - r < hi:
            hi = max(hi, x + r)
            count += 1
        else:
            comps.append((lo, hi))
            sizes.append(count)
            lo, hi, count = x - r, x + r, 1
    comps.append((lo, hi))
    sizes.append(count)
    return comps, sizes


def cardinality_profile(B: BorderedHermitian, eps: float, corner_grid):
    """Eigenvalue counts per interval component for each corner value.

    Row ``r`` belongs to ``corner_grid[r]``; column ``k`` to the k-th
    component in increasing order.
    """
    corner_grid = np.asarray(corner_grid, dtype=float)
    thr = growth_threshold(B, eps, "A1")
    if np.any(corner_grid < thr):
        raise PreconditionViolation(f"corner grid reaches below the A1 threshold {thr!r}")
    comps, _ = interval_components(B.d, eps)
    d = np.broadcast_to(B.d, corner_grid.shape + B.d.shape)
    a = np.broadcast_to(B.a, corner_grid.shape + B.a.shape)
    lam = np.linalg.eigvalsh(assemble(d, a, corner_grid))
    return _count_in(lam, comps)


def _count_in(lam, comps):
    counts = np.zeros(lam.shape[:-1] + (len(comps),), dtype=int)
    for k, (lo, hi) in enumerate(comps):
        counts[..., k] = np.sum((lam > lo) & (lam < hi), axis=-1)
    return counts


# --------------------------------------------------------------------------
# randomised sweeps


def random_instances(n, count, rng):
    """Random ``(d, a, eps)`` with moderate entries; a third get repeated d."""
    m = n - 1
    d = rng.uniform(-2.0, 2.0, size=(count, m))
    rep = rng.random(count) < 1 / 3
    if m > 1:
        d[rep, 1] = d[rep, 0]
    a = (rng.normal(size=(count, m)) + 1j * rng.normal(size=(count, m))) * rng.uniform(0.0, 1.0, size=(count, 1))
    eps = np.exp(rng.uniform(np.log(0.05), np.log(1.0), size=count))
    return d, a, eps


def scaled_corner(thr, factor):
    """Corner ``factor`` times above a threshold, measured in its magnitude.

    Equal to ``factor * thr`` when ``thr >= 0``; for a negative threshold
    (possible for A2 when the ``d`` are negative) it still lies above ``thr``.
    """
    return thr + (factor - 1.0) * np.abs(thr)


def sweep_bounds(n, count, rng, factors=(1.0, 10.0)):
    """Check both lemmas at ``factor * threshold`` for random instances.

    Returns a dict ``{(lemma, factor): violations}`` plus the minimum margins.
    """
    d, a, eps = random_instances(n, count, rng)
    out = {}
    for lemma in LEMMAS:
        thr = threshold_values(d, a, eps, lemma)
        for fac in factors:
            corner = scaled_corner(thr, fac)
            lam = np.linalg.eigvalsh(assemble(d, a, corner))
            m = bounds_margins(lam, d, corner, eps, lemma)
            bad = (m["low"] <= -SLACK) | (m["top_lower"] < -SLACK) | (m["top_upper"] <= -SLACK)
            out[(lemma, fac)] = {
                "violations": int(bad.sum()),
                "min_margin_low": float(m["low"].min()),
                "min_margin_top_lower": float(m["top_lower"].min()),
                "min_margin_top_upper": float(m["top_upper"].min()),
                "plain_upper_violations": int((m["top_upper_plain"] <= -SLACK).sum()),
            }
    return out


def sweep_cardinality(n, count, rng, points=50, span=10.0):
    """Count non-constant profiles over geometric corner grids above threshold.

    A profile also fails if its constant value differs from the cluster sizes
    of ``d`` (the count reached as the corner grows without bound).
    """
    d, a, eps = random_instances(n, count, rng)
    thr = threshold_values(d, a, eps, "A1")
    grid = scaled_corner(thr[:, None], np.geomspace(1.0, span, points)[None, :])
    lam = np.linalg.eigvalsh(assemble(np.repeat(d[:, None], points, 1), np.repeat(a[:, None], points, 1), grid))
    nonconstant = 0
    wrong = 0
    for i in range(count):
        comps, sizes = interval_components(d[i], eps[i])
        c = _count_in(lam[i], comps)
        if np.any(c != c[0]):
            nonconstant += 1
        elif np.any(c[0] != np.asarray(sizes)):
            wrong += 1
    return {"nonconstant": nonconstant, "wrong_count": wrong, "instances": count}
