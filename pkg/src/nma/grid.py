"""Uniform tensor-product grids and central-difference stencils.

Axes come in pairs ``(x_k, y_k)`` forming the complex coordinate
``z_k = x_k + i y_k``.  Periodic axes wrap; non-periodic axes carry Dirichlet
boundary nodes at both ends, and the interior excludes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridTooCoarse

MIN_NODES = 4


@dataclass(frozen=True)
class Grid:
    shape: tuple
    spacing: tuple
    origin: tuple
    periodic: tuple

    def __post_init__(self):
        if not (len(self.shape) == len(self.spacing) == len(self.origin) == len(self.periodic)):
            raise ValueError("shape, spacing, origin and periodic must have equal length")
        if len(self.shape) % 2:
            raise ValueError("grids carry an even number of real axes")
        if min(self.shape) < MIN_NODES:
            raise GridTooCoarse(f"every axis needs at least {MIN_NODES} nodes, got {self.shape}")

    @classmethod
    def box(cls, shape, lengths, periodic, origin=None):
        """Grid on ``prod [origin_a, origin_a + lengths_a]``.

        Periodic axes have ``N`` nodes spaced ``length/N``; Dirichlet axes
        place nodes on both ends, spaced ``length/(N-1)``.
        """
        shape = tuple(int(s) for s in shape)
        periodic = tuple(bool(p) for p in periodic)
        origin = tuple(float(o) for o in (origin if origin is not None else [0.0] * len(shape)))
        spacing = tuple(float(l) / (n if p else n - 1) for l, n, p in zip(lengths, shape, periodic))
        return cls(shape, spacing, origin, periodic)

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def n(self):
        return self.ndim // 2

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis_coords(self, a):
        return self.origin[a] + self.spacing[a] * np.arange(self.shape[a])

    @cached_property
    def interior(self):
        return tuple(slice(None) if p else slice(1, -1) for p in self.periodic)

    @property
    def interior_shape(self):
        return tuple(s if p else s - 2 for s, p in zip(self.shape, self.periodic))

    @property
    def interior_size(self):
        return int(np.prod(self.interior_shape))

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for a, p in enumerate(self.periodic):
            if not p:
                idx = [slice(None)] * self.ndim
                idx[a] = 0
                mask[tuple(idx)] = True
                idx[a] = -1
                mask[tuple(idx)] = True
        return mask

    def coords(self, region="all"):
        """Node coordinates stacked on the last axis, shape ``(..., ndim)``."""
        axes = [self.axis_coords(a) for a in range(self.ndim)]
        if region == "interior":
            axes = [ax[s] for ax, s in zip(axes, self.interior)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_index(self, multi):
        return np.ravel_multi_index(tuple(np.asarray(m) for m in multi), self.shape)

    def multi_index(self, flat):
        return np.unravel_index(flat, self.shape)

    def embed(self, v_interior, boundary=None):
        """Full-grid array with ``v_interior`` inside and boundary values elsewhere."""
        full = np.zeros(self.shape) if boundary is None else np.array(boundary, dtype=float, copy=True)
        full[self.interior] = np.reshape(v_interior, self.interior_shape)
        return full

    @cached_property
    def complex_pairs(self):
        """Real-axis pairs needed for the complex Hessian.

        Pure second derivatives on every axis plus mixed derivatives between
        axes of different complex coordinates; ``x_k y_k`` never enters
        ``u_{k kbar}``.
        """
        pairs = [(a, a) for a in range(self.ndim)]
        pairs += [(a, b) for a in range(self.ndim) for b in range(a + 1, self.ndim) if a // 2 != b // 2]
        return tuple(pairs)


# --------------------------------------------------------------------------
# stencils


class Stencil:
    """Central differences evaluated at interior nodes of a grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._pad = [(1, 1) if p else (0, 0) for p in grid.periodic]

    def pad(self, full):
        if any(self.grid.periodic):
            return np.pad(full, self._pad, mode="wrap")
        return full

    def _sl(self, shifts):
        out = []
        for a in range(self.grid.ndim):
            k = shifts.get(a, 0)
            out.append(slice(1 + k, -1 + k if k < 1 else None))
        return tuple(out)

    def center(self, P):
        return P[self._sl({})]

    def d1(self, P, a):
        h = self.grid.spacing[a]
        return (P[self._sl({a: 1})] - P[self._sl({a: -1})]) / (2 * h)

    def d2(self, P, a, b=None):
        if b is None or b == a:
            h = self.grid.spacing[a]
            return (P[self._sl({a: 1})] - 2 * P[self._sl({})] + P[self._sl({a: -1})]) / (h * h)
        ha, hb = self.grid.spacing[a], self.grid.spacing[b]
        return (
            P[self._sl({a: 1, b: 1})] - P[self._sl({a: 1, b: -1})] - P[self._sl({a: -1, b: 1})] + P[self._sl({a: -1, b: -1})]
        ) / (4 * ha * hb)

    def real_derivatives(self, full):
        """First derivatives on all axes and the second derivatives in ``complex_pairs``."""
        P = self.pad(np.asarray(full, dtype=float))
        first = [self.d1(P, a) for a in range(self.grid.ndim)]
        second = {(a, b): self.d2(P, a, b) for a, b in self.grid.complex_pairs}
        return first, second


@dataclass
class ComplexHessianField:
    """Complex gradient ``u_k`` and Hermitian form ``u_{j kbar}`` per node."""

    grad: np.ndarray
    hess: np.ndarray


def assemble_complex(first, second, n):
    """Combine real derivatives into ``u_k = (u_x - i u_y)/2`` and ``u_{j kbar}``."""
    shape = first[0].shape
    grad = np.empty(shape + (n,), dtype=complex)
    for k in range(n):
        grad[..., k] = 0.5 * (first[2 * k] - 1j * first[2 * k + 1])
    hess = np.empty(shape + (n, n), dtype=complex)
    for j in range(n):
        hess[..., j, j] = 0.25 * (second[(2 * j, 2 * j)] + second[(2 * j + 1, 2 * j + 1)])
        for k in range(j + 1, n):
            xx = second[(2 * j, 2 * k)]
            yy = second[(2 * j + 1, 2 * k + 1)]
            xy = second[(2 * j, 2 * k + 1)]
            yx = second[(2 * j + 1, 2 * k)]
            val = 0.25 * ((xx + yy) + 1j * (xy - yx))
            hess[..., j, k] = val
            hess[..., k, j] = np.conj(val)
    return ComplexHessianField(grad, hess)


def complex_hessian(u, grid: Grid, region="interior"):
    """Complex gradient and Hessian of a full-grid function.

    ``region="interior"`` uses central differences at interior nodes;
    ``region="all"`` adds the Dirichlet end slices, where derivatives along
    the non-periodic axis use second-order one-sided stencils.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {u.shape}")
    if region == "interior":
        first, second = Stencil(grid).real_derivatives(u)
        return assemble_complex(first, second, grid.n)
    if region == "all":
        first, second = all_node_derivatives(u, grid)
        return assemble_complex(first, second, grid.n)
    raise ValueError(f"unknown region {region!r}")


def _d1_periodic(u, a, h):
    return (np.roll(u, -1, axis=a) - np.roll(u, 1, axis=a)) / (2 * h)


def _d2_periodic(u, a, h):
    return (np.roll(u, -1, axis=a) - 2 * u + np.roll(u, 1, axis=a)) / (h * h)


def _d1_full_dirichlet(u, a, h):
    """Central inside, second-order one-sided at both ends of axis ``a``."""
    out = np.empty_like(u)
    t = lambda i: np.take(u, i, axis=a)  # noqa: E731
    idx = [slice(None)] * u.ndim
    idx[a] = slice(1, -1)
    out[tuple(idx)] = (np.take(u, np.arange(2, u.shape[a]), axis=a) - np.take(u, np.arange(0, u.shape[a] - 2), axis=a)) / (2 * h)
    idx[a] = 0
    out[tuple(idx)] = (-3 * t(0) + 4 * t(1) - t(2)) / (2 * h)
    idx[a] = -1
    out[tuple(idx)] = (3 * t(-1) - 4 * t(-2) + t(-3)) / (2 * h)
    return out


def _d2_full_dirichlet(u, a, h):
    out = np.empty_like(u)
    t = lambda i: np.take(u, i, axis=a)  # noqa: E731
    N = u.shape[a]
    idx = [slice(None)] * u.ndim
    idx[a] = slice(1, -1)
    out[tuple(idx)] = (
        np.take(u, np.arange(2, N), axis=a) - 2 * np.take(u, np.arange(1, N - 1), axis=a) + np.take(u, np.arange(0, N - 2), axis=a)
    ) / (h * h)
    idx[a] = 0
    out[tuple(idx)] = (2 * t(0) - 5 * t(1) + 4 * t(2) - t(3)) / (h * h)
    idx[a] = -1
    out[tuple(idx)] = (2 * t(-1) - 5 * t(-2) + 4 * t(-3) - t(-4)) / (h * h)
    return out


def all_node_derivatives(u, grid: Grid):
    """Second-order derivatives at every node (interior and boundary)."""
    first = []
    for a in range(grid.ndim):
        h = grid.spacing[a]
        first.append(_d1_periodic(u, a, h) if grid.periodic[a] else _d1_full_dirichlet(u, a, h))
    second = {}
    for a, b in grid.complex_pairs:
        ha = grid.spacing[a]
        if a == b:
            second[(a, b)] = _d2_periodic(u, a, ha) if grid.periodic[a] else _d2_full_dirichlet(u, a, ha)
        else:
            fa = first[a]
            hb = grid.spacing[b]
            second[(a, b)] = _d1_periodic(fa, b, hb) if grid.periodic[b] else _d1_full_dirichlet(fa, b, hb)
    return first, second
