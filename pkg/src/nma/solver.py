"""Nonlinear Dirichlet solver for ``log P_{n-1}(lambda(gtilde[u])) = psi``.

``gtilde[u] = u_{i jbar} + chi_check + W[grad u]`` is assembled per interior
node from central differences; eigenvalues are taken relative to the
metric.  The discrete problem is solved by damped Newton iteration along a
continuation path in the right-hand side, starting from a strict
subsolution.

Two formulations of the same equation are available:

* ``"gtilde"``: ``f = log P_{n-1}`` applied to ``lambda(gtilde)``.
* ``"standard"``: ``f = sum log lambda`` applied to
  ``X = chi + (Delta u g - u_{i jbar})/(n-1) + Z[grad u]``, whose rescaled
  eigenvalues are the mu-transform of ``lambda(gtilde)``; the target is then
  ``log phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import expr as ex
from . import linalg as la
from .elliptic import (
    StencilOperator,
    boundary_array,
    krylov_solve,
    solve_factor_poisson,
    solve_linear_trace_equation,
)
from .errors import ConeViolation, NoConvergence, PreconditionViolation, SubsolutionNotFound
from .geometry import MetricField, ProductGeometry, gram_schmidt_frame
from .grid import Grid, all_node_derivatives, assemble_complex, complex_hessian
from .symfunc import DEFAULT_MARGIN, LOG_DET, LOG_PN1

FORMULATIONS = ("gtilde", "standard")
MAX_T = 2.0**40
LINEAR_TOL_FLOOR = 1e-13


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    damping: float = 1.0
    continuation_steps: int = 1
    cone_margin: float = DEFAULT_MARGIN
    eps_schedule: tuple = tuple(2.0**-k for k in range(11))
    linear_tol: float = 1e-10
    max_halvings: int = 30
    intermediate_tol: float = 1e-6
    comparison_slack: float = 1e-6

    def __post_init__(self):
        for name in ("newton_tol", "cone_margin", "linear_tol", "intermediate_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.continuation_steps < 1 or self.max_newton_iters < 1:
            raise ValueError("continuation_steps and max_newton_iters must be positive")
        self.eps_schedule = tuple(float(e) for e in self.eps_schedule)


# --------------------------------------------------------------------------
# problem instances


@dataclass
class ProblemInstance:
    """Data of one Dirichlet problem on a product grid.

    ``chi`` is a full-grid Hermitian field, ``psi`` the full-grid target of
    the ``log P_{n-1}`` formulation, and ``boundary`` a full-grid array
    whose Dirichlet slices carry the boundary data.  ``sources`` optionally
    keeps the callables the fields were sampled from, so the instance can
    be rebuilt on another geometry (used by domain shrinking).
    """

    geometry: ProductGeometry
    chi: np.ndarray
    psi: np.ndarray
    boundary: np.ndarray
    phi: Optional[np.ndarray] = None
    phi_tilde: Optional[np.ndarray] = None
    degenerate: bool = False
    formulation: str = "gtilde"
    sources: Optional[dict] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        g = self.grid
        n = self.geometry.n
        self.chi = np.broadcast_to(np.asarray(self.chi, dtype=complex), g.shape + (n, n))
        self.psi = np.broadcast_to(np.asarray(self.psi, dtype=float), g.shape)
        self.boundary = np.where(g.boundary_mask, np.broadcast_to(self.boundary, g.shape), 0.0)
        if self.phi is not None:
            if np.any(self.phi < 0):
                raise PreconditionViolation("phi must be nonnegative")
            if not self.degenerate and np.any(self.phi[g.interior] <= 0):
                raise PreconditionViolation("phi must be positive unless the degenerate flag is set")
        if not self.degenerate and not np.all(np.isfinite(self.psi[g.interior])):
            raise PreconditionViolation("psi must be finite at interior nodes")

    @property
    def grid(self) -> Grid:
        if "grid" not in self._cache:
            self._cache["grid"] = self.geometry.grid()
        return self._cache["grid"]

    @property
    def n(self):
        return self.geometry.n

    @property
    def field(self) -> MetricField:
        if "field" not in self._cache:
            self._cache["field"] = MetricField.build(self.geometry, self.grid)
        return self._cache["field"]

    def with_psi(self, psi, **kw):
        new = replace(self, psi=psi, _cache={}, **kw)
        new._cache.update({k: v for k, v in self._cache.items() if k in ("grid", "field", "chi_check")})
        return new

    def with_formulation(self, formulation):
        new = replace(self, formulation=formulation, _cache={})
        new._cache.update({k: v for k, v in self._cache.items() if k in ("grid", "field", "chi_check")})
        return new

    def phi_interior(self):
        if self.phi is not None:
            return self.phi[self.grid.interior]
        return np.exp(self.psi[self.grid.interior] - self.n * np.log(self.n - 1))


def psi_from_phi(phi, n):
    with np.errstate(divide="ignore"):
        return np.log(phi) + n * np.log(n - 1)


def instance_from_sources(geom: ProductGeometry, chi, phi=None, phi_tilde=None, boundary=0.0,
                          degenerate=False, formulation="gtilde"):
    """Sample callables (or constants) on the geometry's grid.

    ``chi`` may be a scalar ``c`` (meaning ``c * omega``), a constant
    ``(n, n)`` form, or a callable on coordinates returning ``(..., n, n)``.
    ``phi``/``phi_tilde`` and ``boundary`` may be scalars or callables on
    coordinates; exactly one of ``phi``, ``phi_tilde`` is required.
    """
    grid = geom.grid()
    x = grid.coords()
    n = geom.n

    def sample(v):
        return np.asarray(v(x), dtype=float) if callable(v) else np.broadcast_to(float(v), grid.shape)

    if callable(chi):
        chi_f = np.asarray(chi(x), dtype=complex)
    elif np.ndim(chi) == 0:
        chi_f = float(chi) * (geom.chart().metric(x) if not geom.is_flat else np.eye(n))
    else:
        chi_f = np.asarray(chi, dtype=complex)
    if (phi is None) == (phi_tilde is None):
        raise ValueError("give exactly one of phi and phi_tilde")
    pt = None
    if phi_tilde is not None:
        pt = sample(phi_tilde)
        ph = np.maximum(pt, 0.0) ** (n - 1) if np.any(pt < 0) and degenerate else pt ** (n - 1)
    else:
        ph = sample(phi)
    inst = ProblemInstance(geom, chi_f, psi_from_phi(ph, n), sample(boundary), phi=ph, phi_tilde=pt,
                           degenerate=degenerate, formulation=formulation,
                           sources=dict(chi=chi, phi=phi, phi_tilde=phi_tilde, boundary=boundary,
                                        degenerate=degenerate))
    inst._cache["grid"] = grid
    return inst


def rebuild_on(inst: ProblemInstance, geom: ProductGeometry, boundary=None):
    if inst.sources is None:
        raise PreconditionViolation("instance has no sources to rebuild on another geometry")
    src = dict(inst.sources)
    if boundary is not None:
        src["boundary"] = boundary
    new = instance_from_sources(geom, src["chi"], src["phi"], src["phi_tilde"], src["boundary"],
                                src["degenerate"], inst.formulation)
    return new


# --------------------------------------------------------------------------
# operator evaluation


@dataclass
class OperatorState:
    """Pointwise operator data at interior nodes for one iterate."""

    form: np.ndarray  # gtilde (or X) at interior nodes
    lam: np.ndarray
    value: np.ndarray
    margin: np.ndarray
    K: np.ndarray
    c: Optional[np.ndarray]


def _opfun(formulation):
    return LOG_PN1 if formulation == "gtilde" else LOG_DET


def chi_check_interior(inst: ProblemInstance):
    if "chi_check" not in inst._cache:
        f = inst.field.sub(inst.grid.interior)
        inst._cache["chi_check"] = f.chi_check(inst.chi[inst.grid.interior])
    return inst._cache["chi_check"]


def target_interior(inst: ProblemInstance, psi=None):
    psi = inst.psi if psi is None else psi
    t = psi[inst.grid.interior]
    if inst.formulation == "standard":
        t = t - inst.n * np.log(inst.n - 1)
    return t


def operator_form(u, inst: ProblemInstance, formulation=None):
    formulation = inst.formulation if formulation is None else formulation
    grid = inst.grid
    ch = complex_hessian(u, grid)
    f = inst.field.sub(grid.interior)
    n = inst.n
    if formulation == "gtilde":
        A = ch.hess + chi_check_interior(inst) + f.w_of(ch.grad)
    else:
        lap = np.real(f.trace(ch.hess))
        A = inst.chi[grid.interior] + (lap[..., None, None] * f.G - ch.hess) / (n - 1) + f.z_of(ch.grad)
    return la.herm(A), ch


def operator_state(u, inst: ProblemInstance, cone_margin=0.0, need_jacobian=True, formulation=None):
    """Evaluate ``F(u)`` (and the linearisation) at interior nodes.

    Raises :class:`ConeViolation` when some node leaves the admissible cone
    by more than ``cone_margin`` (scale-aware).
    """
    formulation = inst.formulation if formulation is None else formulation
    fun = _opfun(formulation)
    A, _ = operator_form(u, inst, formulation)
    f = inst.field.sub(inst.grid.interior)
    B = f.to_orthonormal(A)
    if need_jacobian:
        lam, U = la.eigh(B)
    else:
        lam, U = la.eigvalsh(B), None
    margin = fun.cone.relative_margin(lam)
    if not np.all(margin > cone_margin):
        idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
        raise ConeViolation(f"eigenvalues leave the {fun.cone.name} cone (relative margin "
                            f"{float(margin[idx]):.3e}) at interior node {tuple(int(i) for i in idx)}",
                            where=tuple(int(i) for i in idx))
    value = fun.value(lam)
    K = c = None
    if need_jacobian:
        fi = fun.gradient(lam)
        Fm = f.from_orthonormal((U * fi[..., None, :]) @ la.ctranspose(U))
        n = inst.n
        if formulation == "gtilde":
            K = Fm
            if not f.flat:
                c = np.einsum("...ij,...mji->...m", Fm, f.Wk)
        else:
            trFG = np.real(la.trace_product(Fm, f.G))
            K = (trFG[..., None, None] * f.Ginv - Fm) / (n - 1)
            if not f.flat:
                c = np.einsum("...ij,...mji->...m", Fm, f.Zk)
    return OperatorState(A, lam, value, margin, K, c)


def build_gtilde(u, inst: ProblemInstance):
    """``gtilde[u]`` at interior nodes (Hermitian per node)."""
    A, _ = operator_form(u, inst, "gtilde")
    return A


def equation_residual(u, inst: ProblemInstance, psi=None):
    """``F(u) - target`` on the full grid, zero on boundary nodes."""
    st = operator_state(u, inst, 0.0, need_jacobian=False)
    out = np.zeros(inst.grid.shape)
    out[inst.grid.interior] = st.value - target_interior(inst, psi)
    return out


def linear_operator(st: OperatorState, grid: Grid):
    return StencilOperator.from_complex(grid, st.K, st.c)


def linearized_apply(u, inst: ProblemInstance, v):
    """Directional derivative of the residual at ``u`` in direction ``v``.

    ``v`` is a full-grid array; its boundary values enter the stencil, so
    for Dirichlet-consistent perturbations they should vanish.
    """
    st = operator_state(u, inst, 0.0)
    out = np.zeros(inst.grid.shape)
    out[inst.grid.interior] = linear_operator(st, inst.grid).apply_full(v)
    return out


# --------------------------------------------------------------------------
# subsolution


@dataclass
class Subsolution:
    u: np.ndarray
    t: float
    h: np.ndarray
    extension: np.ndarray
    min_margin: float
    attempts: int


def boundary_extension(inst: ProblemInstance, tol=1e-10):
    """Zero for homogeneous data, otherwise the lift with ``chi = 0``."""
    if not np.any(inst.boundary):
        return np.zeros(inst.grid.shape)
    sol = solve_linear_trace_equation(inst.geometry, np.zeros((inst.n, inst.n)), inst.boundary,
                                      tol=tol, field=inst.field)
    return sol.v


def construct_subsolution(inst: ProblemInstance, delta=0.1, max_t=MAX_T, cone_margin=DEFAULT_MARGIN):
    """``u = ext + t h`` with ``t`` doubled from 1 until the strict margin holds.

    Strictness: ``F(u) - target >= log(1 + delta/phi)`` at every interior
    node and the cone margin is kept.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    grid = inst.grid
    fp = solve_factor_poisson(inst.geometry)
    h = fp.lift(grid)
    ext = boundary_extension(inst)
    need = np.log1p(delta / inst.phi_interior())
    target = target_interior(inst)
    t = 1.0
    attempts = 0
    while t <= max_t:
        attempts += 1
        u = ext + t * h
        try:
            st = operator_state(u, inst, cone_margin, need_jacobian=False)
            gap = st.value - target - need
            if np.all(gap >= 0):
                return Subsolution(u, t, h, ext, float(np.min(st.value - target)), attempts)
        except ConeViolation:
            pass
        t *= 2.0
    raise SubsolutionNotFound(f"no admissible t up to {max_t:g}; the chi data may not admit t h subsolutions")


# --------------------------------------------------------------------------
# Newton / continuation


@dataclass
class SolveReport:
    converged: bool = False
    newton_iterations: int = 0
    linear_iterations: int = 0
    continuation_steps: int = 0
    residual_history: list = field(default_factory=list)
    cone_margin_history: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    final_residual: float = float("nan")
    verified_residual: float = float("nan")
    quadratic_kappa: Optional[float] = None
    subsolution_t: Optional[float] = None
    comparison: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    levels: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _newton(u, inst, psi_target, tol, cfg: SolverConfig, report: SolveReport, s_value):
    grid = inst.grid
    st = operator_state(u, inst, cfg.cone_margin)
    r = st.value - psi_target
    rn = float(np.max(np.abs(r)))
    iters = 0
    while rn > tol:
        if iters >= cfg.max_newton_iters:
            raise NoConvergence(f"Newton did not reach {tol:.1e} (residual {rn:.3e})", at=s_value)
        op = linear_operator(st, grid)
        lin_tol = max(min(1e-2 * rn, cfg.linear_tol), LINEAR_TOL_FLOOR)
        sol = krylov_solve(op, -r, lin_tol)
        report.linear_iterations += sol.iterations
        dv = grid.embed(sol.x)
        step = cfg.damping
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            trial = u + step * dv
            try:
                st_try = operator_state(trial, inst, cfg.cone_margin)
            except ConeViolation:
                step *= 0.5
                continue
            r_try = st_try.value - psi_target
            rn_try = float(np.max(np.abs(r_try)))
            if rn_try < rn:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise NoConvergence(f"line search failed after {cfg.max_halvings} halvings (residual {rn:.3e})",
                                at=s_value)
        u, st, r, rn = trial, st_try, r_try, rn_try
        iters += 1
        report.residual_history.append(rn)
        report.cone_margin_history.append(float(np.min(st.margin)))
        report.step_lengths.append(step)
    return u, st, iters


def quadratic_kappa(history, threshold=1e-3, floor=1e-8):
    """Largest ``r_{k+1} / r_k^2`` over the last three residuals below ``threshold``.

    Pairs that start below ``floor`` are skipped: there the next residual
    sits at the rounding level and the ratio says nothing about the rate.
    """
    tail = [r for r in history if r < threshold][-3:]
    ks = [b / a**2 for a, b in zip(tail[:-1], tail[1:]) if a > floor]
    return max(ks) if ks else None


def supersolution(inst: ProblemInstance, tol=1e-10):
    """``u_check`` solving ``Delta v + tr chi + tr Z[v] = 0`` with the boundary data."""
    return solve_linear_trace_equation(inst.geometry, inst.chi, inst.boundary, tol=tol, field=inst.field).v


def newton_continuation_solve(inst: ProblemInstance, cfg: SolverConfig, u_sub, check_comparison=True,
                              u_super=None):
    """Solve the discrete equation starting from a strict subsolution.

    The right-hand side moves along ``psi_s = (1-s) psi_0 + s psi`` with
    ``psi_0 = F(u_sub)``; intermediate levels are solved to
    ``max(newton_tol, intermediate_tol)``, the final one to ``newton_tol``.
    """
    grid = inst.grid
    u = np.array(u_sub, dtype=float, copy=True)
    u[grid.boundary_mask] = inst.boundary[grid.boundary_mask]
    report = SolveReport()
    st0 = operator_state(u, inst, cfg.cone_margin)
    psi0 = st0.value
    psi = target_interior(inst)
    r0 = float(np.max(np.abs(psi0 - psi)))
    report.residual_history.append(r0)
    report.cone_margin_history.append(float(np.min(st0.margin)))
    st = st0
    if r0 > cfg.newton_tol:
        S = cfg.continuation_steps
        for k in range(1, S + 1):
            s = k / S
            target = (1 - s) * psi0 + s * psi
            tol = cfg.newton_tol if k == S else max(cfg.newton_tol, cfg.intermediate_tol)
            u, st, its = _newton(u, inst, target, tol, cfg, report, s)
            report.newton_iterations += its
            report.continuation_steps = k
    report.final_residual = report.residual_history[-1]
    # independent re-evaluation of the terminal residual
    res = equation_residual(u, inst)
    report.verified_residual = float(np.max(np.abs(res)))
    report.converged = report.verified_residual <= cfg.newton_tol
    report.quadratic_kappa = quadratic_kappa(report.residual_history)
    if check_comparison:
        ucheck = supersolution(inst) if u_super is None else u_super
        slack = cfg.comparison_slack
        below = float(np.max(u_sub - u))
        above = float(np.max(u - ucheck))
        report.comparison = {
            "sub_le_u": below <= slack,
            "u_le_super": above <= slack,
            "max_sub_minus_u": below,
            "max_u_minus_super": above,
        }
    cone_ok = bool(np.all(st.margin > 0))
    report.comparison["cone_everywhere"] = cone_ok
    return u, report


def solve_instance(inst: ProblemInstance, cfg: SolverConfig, delta=0.1, check_comparison=True):
    """Subsolution search followed by the continuation solve."""
    sub = construct_subsolution(inst, delta, cone_margin=cfg.cone_margin)
    u, rep = newton_continuation_solve(inst, cfg, sub.u, check_comparison)
    rep.subsolution_t = sub.t
    return u, rep, sub


# --------------------------------------------------------------------------
# manufactured solutions


def manufactured_instance(geom: ProductGeometry, u_star, chi, mode="discrete", formulation="gtilde",
                          cone_margin=DEFAULT_MARGIN):
    """Instance whose exact solution is ``u_star``.

    ``mode="discrete"`` builds ``psi`` from the same discrete operator the
    solver uses, so ``u_star`` sampled on the grid is the exact discrete
    solution.  ``mode="analytic"`` builds ``psi`` from analytic derivatives
    of an expression, so the discrete solution differs from ``u_star`` by
    the truncation error (used for order-of-accuracy checks).
    """
    grid = geom.grid()
    x = grid.coords()
    n = geom.n
    if isinstance(u_star, str):
        u_star = ex.parse(u_star)
    if callable(chi) and not isinstance(chi, np.ndarray):
        chi_f = np.asarray(chi(x), dtype=complex)
    elif np.ndim(chi) == 0:
        chi_f = float(chi) * (np.eye(n) if geom.is_flat else geom.chart().metric(x))
    else:
        chi_f = np.asarray(chi, dtype=complex)
    if isinstance(u_star, np.ndarray):
        if mode != "discrete":
            raise ValueError("analytic mode needs an expression for u_star")
        ufull = np.asarray(u_star, dtype=float)
    else:
        ufull = ex.evaluate_on(u_star, x, n)
    boundary = np.where(grid.boundary_mask, ufull, 0.0)
    inst = ProblemInstance(geom, chi_f, np.zeros(grid.shape), boundary, formulation=formulation)
    inst._cache["grid"] = grid
    probe = inst.with_formulation("gtilde")
    if mode == "discrete":
        try:
            st = operator_state(ufull, probe, cone_margin, need_jacobian=False)
        except ConeViolation as err:
            raise ConeViolation(f"{err}; increase the scale of chi", where=err.where) from None
        lam_int = st.value
    elif mode == "analytic":
        xi = x[grid.interior]
        d = ex.complex_derivatives(u_star, xi, n)
        f = probe.field.sub(grid.interior)
        A = la.herm(d.hess + chi_check_interior(probe) + f.w_of(d.grad))
        lam = la.eigvalsh(f.to_orthonormal(A))
        margin = LOG_PN1.cone.relative_margin(lam)
        if not np.all(margin > cone_margin):
            raise ConeViolation("u_star leaves the cone; increase the scale of chi")
        lam_int = LOG_PN1.value(lam)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    psi = np.zeros(grid.shape)
    psi[grid.interior] = lam_int
    # boundary psi by nearest interior neighbour along s (never used by the solver)
    psi = _extend_to_boundary(psi, grid)
    phi = np.exp(psi - n * np.log(n - 1))
    out = ProblemInstance(geom, chi_f, psi, boundary, phi=phi, formulation=formulation)
    out._cache.update({k: v for k, v in inst._cache.items() if k in ("grid", "field")})
    out._cache["u_star"] = ufull
    return out


def _extend_to_boundary(a, grid: Grid):
    out = a.copy()
    for ax, p in enumerate(grid.periodic):
        if p:
            continue
        idx0 = [slice(None)] * grid.ndim
        idx1 = [slice(None)] * grid.ndim
        idx0[ax], idx1[ax] = 0, 1
        out[tuple(idx0)] = out[tuple(idx1)]
        idx0[ax], idx1[ax] = -1, -2
        out[tuple(idx0)] = out[tuple(idx1)]
    return out


# --------------------------------------------------------------------------
# right-hand side checks and degenerate families


@dataclass
class RhsReport:
    growth_constant: float
    zero_nodes: int
    flagged_interior: int
    boundary_zero_nodes: int
    flagged_boundary: int

    @property
    def passed(self):
        return np.isfinite(self.growth_constant) and self.flagged_boundary == 0 and self.flagged_interior == 0


def validate_rhs(inst: ProblemInstance, zero_tol=1e-12, slope_tol=1e-6):
    """Estimate ``C`` in ``|grad phi_tilde| <= C sqrt(phi_tilde)`` and check
    that ``phi_tilde`` has zero normal derivative where it vanishes on the boundary."""
    if inst.phi_tilde is None:
        raise PreconditionViolation("validate_rhs needs a phi_tilde field")
    grid = inst.grid
    pt = np.asarray(inst.phi_tilde, dtype=float)
    first, _ = all_node_derivatives(pt, grid)
    gradsq = sum(f * f for f in first)
    gnorm = np.sqrt(gradsq)
    zero = pt < zero_tol
    ratio = np.where(zero, 0.0, gnorm / np.sqrt(np.where(zero, 1.0, pt)))
    flagged = zero & (gnorm > slope_tol)
    C = float(np.max(ratio)) if np.any(~zero) else 0.0
    if np.any(flagged):
        C = float("inf")
    bzero = zero & grid.boundary_mask
    s_axis = [a for a in range(grid.ndim) if not grid.periodic[a]]
    normal = np.zeros(grid.shape)
    for a in s_axis:
        normal = np.maximum(normal, np.abs(first[a]))
    fb = bzero & (normal > slope_tol)
    return RhsReport(C, int(zero.sum()), int((flagged & ~grid.boundary_mask).sum()), int(bzero.sum()), int(fb.sum()))


@dataclass
class EstimateDiagnostics:
    sup_laplacian: float
    sup_boundary_laplacian: float
    sup_abs_boundary_laplacian: float
    sup_grad: float
    boundary_ratio: float
    interior_ratio: float
    tangential_normal_ratio: float
    mixed_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def estimate_diagnostics(u, inst: ProblemInstance):
    """The four estimate ratios with their constants stripped.

    * ``boundary_ratio``: ``sup_dM Delta u / (1 + sup_M |grad u|^2)``
    * ``interior_ratio``: ``sup_M Delta u / (1 + sup_M |grad u|^2 + sup_dM |Delta u|)``
    * ``tangential_normal_ratio``: ``max_dM tr gtilde / (1 + sum_a |gtilde(xi_a, J xi_n bar)|^2)``
    * ``mixed_ratio``: ``max_dM |gtilde(xi_a, J xi_n bar)| / (1 + sup_M |grad u|)``

    Boundary-node derivatives use second-order one-sided stencils along
    ``s``; ``|grad u|^2 = 4 g^{i jbar} u_i u_jbar``.
    """
    grid = inst.grid
    n = inst.n
    first, second = all_node_derivatives(np.asarray(u, dtype=float), grid)
    ch = assemble_complex(first, second, n)
    f = inst.field
    lap = np.real(f.trace(ch.hess))
    grad2 = f.grad_norm2(ch.grad)
    bm = grid.boundary_mask
    sup_lap = float(lap.max())
    sup_blap = float(lap[bm].max())
    sup_ablap = float(np.abs(lap[bm]).max())
    sup_grad2 = float(grad2.max())
    # gtilde on boundary nodes, in the adapted frame
    fb = MetricField(n, f.G[bm] if not f.flat else np.broadcast_to(np.eye(n), (int(bm.sum()), n, n)),
                     None, None, f.flat,
                     None if f.flat else f.Zk[bm], None if f.flat else f.Wk[bm], None)
    G_b = np.asarray(fb.G, dtype=complex)
    Ginv_b = np.linalg.inv(G_b)
    chi_b = inst.chi[bm]
    trchi = np.real(la.trace_product(Ginv_b, chi_b))
    chicheck = trchi[..., None, None] * G_b - (n - 1) * chi_b
    Wb = 0.0 if f.flat else ex_apply(fb.Wk, ch.grad[bm])
    gt = la.herm(ch.hess[bm] + chicheck + Wb)
    s_ax = [a for a in range(grid.ndim) if not grid.periodic[a]][-1]
    sidx = np.nonzero(bm)[s_ax]
    side = np.where(sidx == 0, 1.0, -1.0)
    A = gram_schmidt_frame(G_b, side)
    gtf = np.swapaxes(A, -1, -2) @ gt @ np.conj(A)
    cross = np.abs(gtf[..., : n - 1, n - 1])
    trg = np.real(la.trace_product(Ginv_b, gt))
    sup_grad = float(np.sqrt(sup_grad2))
    return EstimateDiagnostics(
        sup_laplacian=sup_lap,
        sup_boundary_laplacian=sup_blap,
        sup_abs_boundary_laplacian=sup_ablap,
        sup_grad=sup_grad,
        boundary_ratio=sup_blap / (1 + sup_grad2),
        interior_ratio=sup_lap / (1 + sup_grad2 + sup_ablap),
        tangential_normal_ratio=float(np.max(trg / (1 + np.sum(cross**2, axis=-1)))),
        mixed_ratio=float(np.max(cross)) / (1 + sup_grad),
    )


def ex_apply(Ck, grad):
    A = np.einsum("...mij,...m->...ij", Ck, grad)
    return A + la.ctranspose(A)


def c1_distance(u, v, grid: Grid):
    """``max |u - v| + max |grad (u - v)|`` with all-node stencils."""
    d = np.asarray(u) - np.asarray(v)
    first, _ = all_node_derivatives(d, grid)
    return float(np.max(np.abs(d)) + np.max(np.sqrt(sum(f * f for f in first))))


def regularized_instance(inst: ProblemInstance, eps):
    """``phi_tilde + eps`` in place of ``phi_tilde`` (nondegenerate)."""
    n = inst.n
    pt = np.asarray(inst.phi_tilde, dtype=float) + eps
    phi = pt ** (n - 1)
    new = replace(inst, psi=psi_from_phi(phi, n), phi=phi, phi_tilde=pt, degenerate=False, _cache={})
    new._cache.update({k: v for k, v in inst._cache.items() if k in ("grid", "field", "chi_check")})
    return new


def degenerate_solve(inst: ProblemInstance, cfg: SolverConfig, delta=0.1):
    """Solve along ``phi_tilde + eps_k`` and collect uniform-bound diagnostics.

    Each level starts from the previous level's solution, which is a strict
    subsolution for the next (smaller) right-hand side.
    """
    if inst.phi_tilde is None:
        raise PreconditionViolation("degenerate_solve needs phi_tilde")
    sols = []
    report = SolveReport()
    report.notes.append("levels warm-start from the previous level")
    prev = None
    for k, eps in enumerate(cfg.eps_schedule):
        lev = regularized_instance(inst, eps)
        if prev is None:
            sub = construct_subsolution(lev, delta, cone_margin=cfg.cone_margin)
            start = sub.u
            report.subsolution_t = sub.t
        else:
            start = prev
        u, rep = newton_continuation_solve(lev, cfg, start)
        diag = estimate_diagnostics(u, lev)
        entry = {
            "eps": eps,
            "newton_iterations": rep.newton_iterations,
            "final_residual": rep.verified_residual,
            "converged": rep.converged,
            "comparison": rep.comparison,
            "estimates": diag.as_dict(),
        }
        if prev is not None:
            entry["c1_difference"] = c1_distance(u, prev, inst.grid)
            entry["monotone_violation"] = float(np.max(prev - u))
        report.levels.append(entry)
        report.newton_iterations += rep.newton_iterations
        report.linear_iterations += rep.linear_iterations
        sols.append(u)
        prev = u
    report.converged = all(lv["converged"] for lv in report.levels)
    return sols, report


# --------------------------------------------------------------------------
# domain shrinking


def level_set_interval(geom: ProductGeometry, alpha):
    """``{h < -alpha}`` for ``h = 2(s - s0)(s - s0 - L)``: an inner interval in ``s``."""
    L = geom.L
    disc = L * L / 4 - alpha / 2
    if alpha < 0 or disc <= 0:
        raise PreconditionViolation(f"alpha {alpha} outside (0, {L * L / 2})")
    r = np.sqrt(disc)
    return geom.s0 + L / 2 - r, geom.s0 + L / 2 + r


def _spline_along_s(values, grid: Grid, s_new):
    ax = [a for a in range(grid.ndim) if not grid.periodic[a]][-1]
    cs = CubicSpline(grid.axis_coords(ax), values, axis=ax)
    return cs(s_new)


def domain_shrink_solve(inst: ProblemInstance, alphas, cfg: SolverConfig, delta=0.1):
    """Solve on the inner cylinders ``{h < -alpha_k}`` with data from the global subsolution."""
    alphas = [float(a) for a in alphas]
    if any(a < 0 for a in alphas) or any(b > a for a, b in zip(alphas, alphas[1:])):
        raise PreconditionViolation("alphas must be nonnegative and nonincreasing")
    sub = construct_subsolution(inst, delta, cone_margin=cfg.cone_margin)
    geom = inst.geometry
    grid = inst.grid
    s_ax = grid.ndim - 2
    report = SolveReport(subsolution_t=sub.t)
    sols = []
    for alpha in alphas:
        if alpha == 0:
            gk, lo, hi = geom, geom.s0, geom.s1
        else:
            lo, hi = level_set_interval(geom, alpha)
            gk = geom.shrunk(lo, hi)
        gridk = gk.grid()
        sub_k = _spline_along_s(sub.u, grid, gridk.axis_coords(s_ax))
        inst_k = rebuild_on(inst, gk, boundary=0.0)
        inst_k = replace(inst_k, boundary=np.where(gridk.boundary_mask, sub_k, 0.0), _cache={})
        w = solve_linear_trace_equation(gk, inst_k.chi, inst_k.boundary, "supersolution_w", field=inst_k.field).v
        u, rep = newton_continuation_solve(inst_k, cfg, sub_k, u_super=w)
        lower = float(np.max(sub_k - u))
        upper = float(np.max(u - w))
        entry = {
            "alpha": alpha,
            "s_interval": [float(lo), float(hi)],
            "boundary_value_ref": float(np.mean(sub_k[gridk.boundary_mask])),
            "newton_iterations": rep.newton_iterations,
            "final_residual": rep.verified_residual,
            "converged": rep.converged,
            "max_sub_minus_u": lower,
            "max_u_minus_w": upper,
            "ordering_ok": lower <= cfg.comparison_slack and upper <= cfg.comparison_slack,
        }
        if sols:
            prev_u, prev_grid = sols[-1]
            # compare on the smaller (previous) domain: interpolate the current level onto it
            s_prev = prev_grid.axis_coords(s_ax)
            u_on_prev = _spline_along_s(u, gridk, s_prev)
            entry["c0_difference"] = float(np.max(np.abs(u_on_prev - prev_u)))
            entry["c1_difference"] = c1_distance(u_on_prev, prev_u, prev_grid)
        report.levels.append(entry)
        report.newton_iterations += rep.newton_iterations
        sols.append((u, gridk))
    report.converged = all(lv["converged"] for lv in report.levels)
    return [s for s, _ in sols], report
