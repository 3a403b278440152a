"""Hermitian metric machinery on charts and on the product manifold.

Conventions
-----------
* A metric is stored as the matrix ``G[..., i, j] = g_{i jbar}``.  The
  inverse with upper indices is ``g^{i jbar} = inv(G)[..., j, i]``; the
  trace of a Hermitian form ``A`` is ``tr_w A = trace(inv(G) @ A)``.
* Real coordinates are interleaved ``(x_1, y_1, ..., x_n, y_n)`` with
  ``z_k = x_k + i y_k``; the last pair is ``w = s + i t`` on the cylinder.
* ``dg[..., i, j, l] = d g_{j lbar} / d z_i`` with ``d/dz = (d/dx - i d/dy)/2``.
* Torsion ``T[..., k, i, j] = T^k_{ij}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import linalg as la
from .errors import SingularMetric
from .grid import Grid

DEFAULT_H_FD = 1e-5
MIN_METRIC_EIG = 0.1


def as_real_coords(z, n):
    """Accept complex ``(..., n)`` or real interleaved ``(..., 2n)`` points."""
    z = np.asarray(z)
    if np.iscomplexobj(z):
        if z.shape[-1] != n:
            raise ValueError(f"complex point needs {n} components")
        out = np.empty(z.shape[:-1] + (2 * n,))
        out[..., 0::2] = z.real
        out[..., 1::2] = z.imag
        return out
    if z.shape[-1] != 2 * n:
        raise ValueError(f"real point needs {2 * n} components")
    return z.astype(float)


@dataclass
class MetricChart:
    """A Hermitian metric given in one holomorphic chart.

    ``g`` maps real coordinates ``(..., 2n)`` to ``(..., n, n)`` coefficient
    matrices.  ``dg`` optionally returns ``d g_{j lbar}/d z_i`` with the
    layout of the module docstring; otherwise it is approximated by central
    differences with step ``h_fd``.
    """

    n: int
    g: Callable
    dg: Optional[Callable] = None
    h_fd: float = DEFAULT_H_FD

    def metric(self, x):
        x = as_real_coords(x, self.n)
        return np.asarray(self.g(x), dtype=complex)

    def dmetric(self, x):
        x = as_real_coords(x, self.n)
        if self.dg is not None:
            return np.asarray(self.dg(x), dtype=complex)
        return self.dmetric_fd(x)

    def dmetric_fd(self, x):
        x = as_real_coords(x, self.n)
        n, h = self.n, self.h_fd
        out = np.empty(x.shape[:-1] + (n, n, n), dtype=complex)
        for i in range(n):
            dx = np.zeros(2 * n)
            dx[2 * i] = h
            dy = np.zeros(2 * n)
            dy[2 * i + 1] = h
            gx = (self.metric(x + dx) - self.metric(x - dx)) / (2 * h)
            gy = (self.metric(x + dy) - self.metric(x - dy)) / (2 * h)
            out[..., i, :, :] = 0.5 * (gx - 1j * gy)
        return out


def flat_chart(n):
    return MetricChart(n, lambda x: np.broadcast_to(np.eye(n, dtype=complex), x.shape[:-1] + (n, n)).copy(),
                       lambda x: np.zeros(x.shape[:-1] + (n, n, n), dtype=complex))


def _check_metric(G):
    w = la.eigvalsh(G)
    lo = w[..., 0]
    bad = ~(lo > 1e-12 * np.maximum(1.0, np.abs(w[..., -1])))
    if np.any(bad):
        idx = np.argwhere(np.asarray(bad))[0] if np.ndim(bad) else None
        raise SingularMetric(f"metric not positive definite (min eigenvalue {float(np.min(lo))!r}) at {idx}")


def inverse_metric_upper(G):
    """``gup[..., i, j] = g^{i jbar}``."""
    return np.swapaxes(np.linalg.inv(G), -1, -2)


def torsion_from(G, dG):
    gup = inverse_metric_upper(G)
    diff = dG - np.swapaxes(dG, -3, -2)  # [i, j, l]: d_i g_{j l} - d_j g_{i l}
    return np.einsum("...kl,...ijl->...kij", gup, diff)


def torsion_at(chart: MetricChart, z):
    """Torsion ``T^k_{ij}`` at one or many points."""
    G = chart.metric(z)
    _check_metric(G)
    return torsion_from(G, chart.dmetric(z))


def z_coefficients(G, T):
    """Coefficient tensors of ``Z[v]`` in the holomorphic gradient.

    Returns ``Zk`` with ``Zk[..., m, i, j]`` the coefficient of ``v_m`` in
    ``Z_{i jbar}``; the coefficient of ``v_mbar`` is ``Zk[..., m]^H``.
    """
    n = G.shape[-1]
    gup = inverse_metric_upper(G)
    tau = np.einsum("...lql->...q", T)
    Tc = np.conj(T)
    term1 = np.einsum("...mq,...q,...ij->...mij", gup, np.conj(tau), G)
    term3 = np.einsum("...ml,...iq,...qlj->...mij", gup, G, Tc)
    eye = np.eye(n)
    term5 = np.einsum("im,...j->...mij", eye, np.conj(tau))
    return (term1 - term3 - term5) / (2 * (n - 1))


def apply_coefficients(Ck, grad):
    """``sum_m Ck[m] v_m + Ck[m]^H conj(v_m)`` for a per-node gradient."""
    A = np.einsum("...mij,...m->...ij", Ck, grad)
    return A + la.ctranspose(A)


def trace_w(G, A, Ginv=None):
    Ginv = np.linalg.inv(G) if Ginv is None else Ginv
    return la.trace_product(Ginv, A)


def z_tensor(chart: MetricChart, z, grad_v):
    """``Z[v]_{i jbar}`` at ``z`` from the holomorphic gradient ``(v_1..v_n)``."""
    G = chart.metric(z)
    _check_metric(G)
    T = torsion_from(G, chart.dmetric(z))
    return apply_coefficients(z_coefficients(G, T), np.asarray(grad_v, dtype=complex))


@dataclass
class WTensor:
    W: np.ndarray
    Wk: np.ndarray
    Wkbar: np.ndarray
    Z: np.ndarray


def w_coefficients(G, Zk, Ginv=None):
    n = G.shape[-1]
    Ginv = np.linalg.inv(G) if Ginv is None else Ginv
    trk = np.einsum("...ji,...mij->...m", Ginv, Zk)
    return trk[..., None, None] * G[..., None, :, :] - (n - 1) * Zk


def w_tensor(chart: MetricChart, z, grad_v):
    """``W = (tr Z) g - (n-1) Z`` with its coefficient tensors.

    ``Wk[..., m]`` multiplies ``v_m`` and ``Wkbar[..., m]`` multiplies
    ``conj(v_m)``; they are extracted by evaluating on basis gradients.
    """
    n = chart.n
    G = chart.metric(z)
    _check_metric(G)
    T = torsion_from(G, chart.dmetric(z))
    Zk = z_coefficients(G, T)
    grad_v = np.asarray(grad_v, dtype=complex)

    def w_of(grad):
        Z = apply_coefficients(Zk, grad)
        return chi_check_transform(Z, G), Z

    W, Z = w_of(grad_v)
    shape = G.shape[:-2]
    Wk = np.empty(shape + (n, n, n), dtype=complex)
    Wkbar = np.empty_like(Wk)
    for m in range(n):
        e = np.zeros(shape + (n,), dtype=complex)
        e[..., m] = 1.0
        Wr, _ = w_of(e)
        Wi, _ = w_of(1j * e)
        # W[e] = Wk + Wkbar, W[i e] = i Wk - i Wkbar
        Wk[..., m, :, :] = 0.5 * (Wr - 1j * Wi)
        Wkbar[..., m, :, :] = 0.5 * (Wr + 1j * Wi)
    return WTensor(W, Wk, Wkbar, Z)


def chi_check_transform(chi, G):
    """``(tr_w chi) g - (n-1) chi``: the matrix form of the mu-transform."""
    G = np.asarray(G, dtype=complex)
    _check_metric(G)
    n = G.shape[-1]
    return trace_w(G, chi)[..., None, None] * G - (n - 1) * np.asarray(chi)


def eigenvalues_wrt(A, G):
    """Eigenvalues of the form ``A`` relative to the metric ``G``, ascending."""
    Linv = la.inv_cholesky(G)
    return la.eigvalsh(Linv @ A @ la.ctranspose(Linv))


# --------------------------------------------------------------------------
# product manifold X x S


@dataclass
class ProductGeometry:
    """Flat torus times cylinder, optionally with a Hermitian perturbation.

    The torus factor carries complex coordinates ``z_1..z_{n-1}``, the
    cylinder factor ``w = s + i t`` with ``s`` in ``[s0, s0 + L]`` and
    ``t`` periodic.  The metric is ``I + P(x)`` where ``P`` is the optional
    perturbation callback on real coordinates.
    """

    n: int = 2
    torus_periods: Optional[tuple] = None
    L: float = 1.0
    t_period: float = 2 * np.pi
    s0: float = 0.0
    torus_nodes: tuple | int = 16
    ns: int = 32
    nt: int = 16
    perturbation: Optional[Callable] = None
    perturbation_dg: Optional[Callable] = None
    h_fd: float = DEFAULT_H_FD

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("complex dimension must be at least 2")
        k = 2 * (self.n - 1)
        if self.torus_periods is None:
            self.torus_periods = (2 * np.pi,) * k
        self.torus_periods = tuple(float(p) for p in self.torus_periods)
        if isinstance(self.torus_nodes, (int, np.integer)):
            self.torus_nodes = (int(self.torus_nodes),) * k
        self.torus_nodes = tuple(int(v) for v in self.torus_nodes)
        if len(self.torus_periods) != k or len(self.torus_nodes) != k:
            raise ValueError(f"torus needs {k} real periods and node counts")

    @property
    def is_flat(self):
        return self.perturbation is None

    @property
    def s1(self):
        return self.s0 + self.L

    def grid(self) -> Grid:
        shape = self.torus_nodes + (self.ns, self.nt)
        lengths = self.torus_periods + (self.L, self.t_period)
        periodic = (True,) * len(self.torus_nodes) + (False, True)
        origin = (0.0,) * len(self.torus_nodes) + (self.s0, 0.0)
        return Grid.box(shape, lengths, periodic, origin)

    def chart(self) -> MetricChart:
        n = self.n
        if self.perturbation is None:
            return flat_chart(n)
        P = self.perturbation

        def g(x):
            return np.eye(n) + np.asarray(P(x), dtype=complex)

        return MetricChart(n, g, self.perturbation_dg, self.h_fd)

    def refined(self, factor=2):
        return replace(self, torus_nodes=tuple(factor * v for v in self.torus_nodes),
                       ns=factor * self.ns, nt=factor * self.nt)

    def with_nodes(self, torus_nodes, ns, nt):
        return replace(self, torus_nodes=torus_nodes, ns=ns, nt=nt)

    def shrunk(self, s_lo, s_hi, ns=None):
        """Inner cylinder ``[s_lo, s_hi]`` with the same metric data."""
        if not (self.s0 <= s_lo < s_hi <= self.s1):
            raise ValueError("shrunk interval must lie inside the cylinder")
        return replace(self, s0=float(s_lo), L=float(s_hi - s_lo), ns=self.ns if ns is None else ns)

    def validate(self, min_eig=MIN_METRIC_EIG):
        """Reject perturbations whose metric drops below ``min_eig``."""
        if self.is_flat:
            return 1.0
        G = self.chart().metric(self.grid().coords())
        lo = float(la.eigvalsh(G)[..., 0].min())
        if lo < min_eig:
            raise SingularMetric(f"perturbed metric has minimum eigenvalue {lo:.3g} < {min_eig}")
        return lo


@dataclass
class MetricField:
    """Metric data sampled at every node of a grid.

    ``Zk`` and ``Wk`` hold the first-order coefficient tensors of ``Z[v]``
    and ``W[v]`` (``None`` when torsion vanishes identically).
    """

    n: int
    G: np.ndarray
    Ginv: np.ndarray
    Linv: np.ndarray
    flat: bool
    Zk: Optional[np.ndarray] = None
    Wk: Optional[np.ndarray] = None
    trZk: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, geom: ProductGeometry, grid: Grid | None = None):
        grid = geom.grid() if grid is None else grid
        n = geom.n
        shape = grid.shape
        if geom.is_flat:
            I = np.broadcast_to(np.eye(n, dtype=complex), shape + (n, n))
            return cls(n, I, I, I, True)
        chart = geom.chart()
        x = grid.coords()
        G = la.herm(chart.metric(x))
        _check_metric(G)
        Ginv = np.linalg.inv(G)
        Linv = la.inv_cholesky(G)
        T = torsion_from(G, chart.dmetric(x))
        Zk = z_coefficients(G, T)
        trZk = np.einsum("...ji,...mij->...m", Ginv, Zk)
        Wk = trZk[..., None, None] * G[..., None, :, :] - (n - 1) * Zk
        return cls(n, G, Ginv, Linv, False, Zk, Wk, trZk)

    def sub(self, index):
        """Restrict every per-node array to ``index`` (a tuple of slices)."""
        take = lambda a: None if a is None else a[index]  # noqa: E731
        return MetricField(self.n, take(self.G), take(self.Ginv), take(self.Linv), self.flat,
                           take(self.Zk), take(self.Wk), take(self.trZk))

    def trace(self, A):
        if self.flat:
            return np.einsum("...ii->...", A)
        return la.trace_product(self.Ginv, A)

    def z_of(self, grad):
        if self.flat:
            return np.zeros(grad.shape + (self.n,), dtype=complex)
        return apply_coefficients(self.Zk, grad)

    def w_of(self, grad):
        if self.flat:
            return np.zeros(grad.shape + (self.n,), dtype=complex)
        return apply_coefficients(self.Wk, grad)

    def tr_z_of(self, grad):
        """``tr_w Z[v] = 2 Re sum_m trZk[m] v_m``."""
        if self.flat:
            return np.zeros(grad.shape[:-1])
        return 2.0 * np.real(np.einsum("...m,...m->...", self.trZk, grad))

    def chi_check(self, chi):
        return self.trace(chi)[..., None, None] * self.G - (self.n - 1) * chi

    def to_orthonormal(self, A):
        """Congruence ``Linv A Linv^H`` whose eigenvalues are those w.r.t. ``g``."""
        if self.flat:
            return A
        return self.Linv @ A @ la.ctranspose(self.Linv)

    def from_orthonormal(self, B):
        """Adjoint map: ``Linv^H B Linv`` (pulls matrix gradients back)."""
        if self.flat:
            return B
        return la.ctranspose(self.Linv) @ B @ self.Linv

    def grad_norm2(self, grad):
        """``4 g^{i jbar} v_i conj(v_j)``; Euclidean ``|grad v|^2`` when ``g = I``."""
        if self.flat:
            return 4.0 * np.sum(np.abs(grad) ** 2, axis=-1)
        return 4.0 * np.real(np.einsum("...ji,...i,...j->...", self.Ginv, grad, np.conj(grad)))


def laplacian_from_hessian(field_: MetricField, hess):
    """``Delta v = g^{i jbar} v_{i jbar}``."""
    return np.real(field_.trace(hess))


# --------------------------------------------------------------------------
# boundary frames and Levi form


@dataclass
class BoundaryFrame:
    """Unitary frame at boundary points.

    ``A[..., i, a]`` is the ``i``-th coordinate component of ``xi_a``; the
    frame satisfies ``A^T G conj(A) = I`` and ``xi_n`` is the (1,0) part of
    the inner unit normal, normalised as ``(nu - i J nu)/sqrt(2)``.
    """

    point: np.ndarray
    A: np.ndarray
    side: np.ndarray

    def gram(self, G):
        return np.swapaxes(self.A, -1, -2) @ G @ np.conj(self.A)

    def pullback(self, form):
        """``form(xi_a, conj(xi_b))`` as a matrix."""
        return np.swapaxes(self.A, -1, -2) @ form @ np.conj(self.A)


def _inner(u, w, G):
    """``u^T G conj(w)`` per batch entry."""
    return np.einsum("...i,...ij,...j->...", u, G, np.conj(w))


def gram_schmidt_frame(G, side):
    """Frame adapted to ``{Re w = const}`` from the metric at the points.

    ``side`` is ``+1`` where the interior lies toward increasing ``s``
    (inner boundary ``s = s0``) and ``-1`` on the outer boundary.
    """
    G = np.asarray(G, dtype=complex)
    n = G.shape[-1]
    shape = G.shape[:-2]
    A = np.zeros(shape + (n, n), dtype=complex)
    for a in range(n):
        v = np.zeros(shape + (n,), dtype=complex)
        v[..., a] = 1.0
        for b in range(a):
            e = A[..., :, b]
            v = v - _inner(v, e, G)[..., None] * e
        nv = np.sqrt(np.real(_inner(v, v, G)))
        A[..., :, a] = v / nv[..., None]
    A[..., :, n - 1] *= np.asarray(side, dtype=float)[..., None]
    return A


def boundary_frame(geom: ProductGeometry, boundary_point):
    """Adapted unitary frame at one or many boundary points (real coordinates)."""
    x = as_real_coords(boundary_point, geom.n)
    s = x[..., -2]
    on0 = np.isclose(s, geom.s0, atol=1e-12 * max(1.0, abs(geom.s0)))
    on1 = np.isclose(s, geom.s1, atol=1e-12 * max(1.0, abs(geom.s1)))
    if not np.all(on0 | on1):
        raise ValueError("boundary_frame needs points with s on the boundary")
    side = np.where(on0, 1.0, -1.0)
    G = geom.chart().metric(x)
    _check_metric(G)
    return BoundaryFrame(x, gram_schmidt_frame(G, side), side)


def defining_function(geom: ProductGeometry, side):
    """``rho`` negative inside: ``-(s - s0)`` near ``s0``, ``s - s1`` near ``s1``."""
    if side > 0:
        return lambda x: -(x[..., -2] - geom.s0)
    return lambda x: x[..., -2] - geom.s1


def _levi_hessian_fd(rho, x, n, h=1e-4):
    """Complex Hessian ``rho_{i jbar}`` by central differences (cross-check)."""
    H = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
    e = np.eye(2 * n) * h

    def d2(a, b):
        return (rho(x + e[a] + e[b]) - rho(x + e[a] - e[b]) - rho(x - e[a] + e[b]) + rho(x - e[a] - e[b])) / (4 * h * h)

    for j in range(n):
        for k in range(n):
            xx, yy = d2(2 * j, 2 * k), d2(2 * j + 1, 2 * k + 1)
            xy, yx = d2(2 * j, 2 * k + 1), d2(2 * j + 1, 2 * k)
            H[..., j, k] = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return H


def levi_mean_curvature(geom: ProductGeometry, boundary_point, cross_check=False):
    """``-(kappa_1 + ... + kappa_{n-1})`` of the Levi form at boundary points.

    The boundary components are ``{s = const}``, whose defining functions
    are affine, so the analytic Levi form vanishes identically; the
    finite-difference route is available as a cross-check.
    """
    frame = boundary_frame(geom, boundary_point)
    x = frame.point
    n = geom.n
    if cross_check:
        out = np.empty(x.shape[:-1])
        flat_x = x.reshape(-1, 2 * n)
        flat_side = np.broadcast_to(frame.side, x.shape[:-1]).reshape(-1)
        flat_A = frame.A.reshape(-1, n, n)
        res = np.empty(flat_x.shape[0])
        for p in range(flat_x.shape[0]):
            rho = defining_function(geom, flat_side[p])
            Hr = _levi_hessian_fd(rho, flat_x[p], n)
            L = (flat_A[p].T @ Hr @ np.conj(flat_A[p]))[: n - 1, : n - 1]
            # |d rho| = 1 in the Euclidean normalisation of s
            res[p] = -np.real(np.trace(L))
        out[...] = res.reshape(out.shape)
        return out
    return np.zeros(x.shape[:-1])


# --------------------------------------------------------------------------
# adapted-frame identities


@dataclass
class AdaptedIdentityReport:
    znn_residual: float
    znn_two_route_residual: float
    w_sum_residual: float
    w_sum_bar_residual: float

    @property
    def max_residual(self):
        return max(self.znn_residual, self.znn_two_route_residual, self.w_sum_residual, self.w_sum_bar_residual)


def frame_chart(chart: MetricChart, x0, A):
    """Chart ``zeta -> z0 + A zeta`` in which the frame becomes the coordinate basis."""
    n = chart.n
    x0 = as_real_coords(x0, n)
    z0 = x0[0::2] + 1j * x0[1::2]
    At = A.T
    Ab = np.conj(A)

    def to_x(xi):
        zeta = xi[..., 0::2] + 1j * xi[..., 1::2]
        z = z0 + zeta @ At
        return as_real_coords(z, n)

    def g(xi):
        return At @ chart.metric(to_x(xi)) @ Ab

    dg = None
    if chart.dg is not None:
        def dg(xi):
            D = chart.dmetric(to_x(xi))  # [i, j, l]
            return np.einsum("ia,jb,lc,...ijl->...abc", A, A, np.conj(A), D)
    return MetricChart(n, g, dg, chart.h_fd)


def verify_adapted_identities(chart: MetricChart, frame: BoundaryFrame, grad_v, index=()):
    """Residuals of ``2(n-1)Z_{n nbar}`` and of the vanishing ``W`` sums.

    Everything is evaluated in the frame chart, where ``g = I`` at the base
    point.  ``grad_v`` is the coordinate gradient ``(v_1..v_n)`` at the
    point; it is transported to the frame as ``A^T grad_v``.
    """
    n = chart.n
    x0 = np.asarray(frame.point)[index]
    A = np.asarray(frame.A)[index]
    fc = frame_chart(chart, x0, A)
    origin = np.zeros(2 * n)
    G = fc.metric(origin)
    T = torsion_from(G, fc.dmetric(origin))
    Zk = z_coefficients(G, T)
    v = A.T @ np.asarray(grad_v, dtype=complex)
    Z = apply_coefficients(Zk, v)
    # the right side from torsion components over tangential indices
    rhs = 0.0 + 0.0j
    for a in range(n - 1):
        for b in range(n - 1):
            rhs += np.conj(T[b, a, b]) * v[a] + T[b, a, b] * np.conj(v[a])
    lhs = 2 * (n - 1) * Z[n - 1, n - 1]
    # the route through the original coordinates: transport Z back
    Zc = z_tensor(chart, x0, grad_v)
    Zframe = A.T @ Zc @ np.conj(A)
    Wk = w_coefficients(G, Zk)
    w_sum = sum(Wk[n - 1, a, a] for a in range(n - 1))
    w_sum_bar = sum(np.conj(Wk[n - 1, a, a]) for a in range(n - 1))
    scale = 1.0 + float(np.max(np.abs(T))) * (1.0 + float(np.max(np.abs(v))))
    return AdaptedIdentityReport(
        znn_residual=float(abs(lhs - rhs)) / scale,
        znn_two_route_residual=float(abs(2 * (n - 1) * Zframe[n - 1, n - 1] - rhs)) / scale,
        w_sum_residual=float(abs(w_sum)) / scale,
        w_sum_bar_residual=float(abs(w_sum_bar)) / scale,
    )
