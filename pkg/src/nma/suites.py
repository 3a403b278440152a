"""Experiment suites dispatched by the command line.

Each suite fills a :class:`~nma.report.ReportDocument` with results,
flat numeric tables and named pass/fail checks.  Domain errors raised by
the numerical modules are caught and recorded in the report.
"""

from __future__ import annotations

import numpy as np

from . import bordered as bd
from . import expr as ex
from . import symfunc as sf
from .config import ConfigDocument
from .elliptic import solve_factor_poisson
from .errors import NMAError, PreconditionViolation
from .geometry import ProductGeometry
from .report import ReportDocument, make_metadata
from .solver import (
    SolverConfig,
    degenerate_solve,
    domain_shrink_solve,
    estimate_diagnostics,
    instance_from_sources,
    manufactured_instance,
    solve_instance,
    validate_rhs,
)

MASK64 = (1 << 64) - 1
DEFAULT_N_VALUES = list(range(2, 9))
DEFAULT_GRIDS = [[16, 32, 16], [32, 64, 32]]
DEGENERATE_NEWTON_TOL = 1e-8


def splitmix64(x: int) -> int:
    """One step of the splitmix64 output function."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def suite_seed(master: int, suite: str) -> int:
    """Per-suite seed: ``splitmix64(master XOR fnv1a64(suite))``."""
    return splitmix64((int(master) & MASK64) ^ fnv1a64(suite))


# --------------------------------------------------------------------------
# building numerical objects from a config


def build_geometry(doc: ConfigDocument) -> ProductGeometry:
    g = doc.geometry
    n = g["n"]
    P = dP = None
    if "perturbation" in g:
        entries = {}
        for key, val in g["perturbation"].items():
            i, j = int(key[0]) - 1, int(key[1]) - 1
            re_e = doc.exprs[f"geometry.perturbation.{key}.re"] if "re" in val else ex.Num(0.0)
            im_e = doc.exprs.get(f"geometry.perturbation.{key}.im")
            entries[(i, j)] = (re_e, im_e)
        P, dP = ex.hermitian_field(entries, n)
    geom = ProductGeometry(
        n=n,
        torus_periods=tuple(g["torus_periods"]) if "torus_periods" in g else None,
        L=float(g["L"]),
        t_period=float(g["t_period"]),
        s0=float(g["s0"]),
        torus_nodes=tuple(g["torus_nodes"]),
        ns=g["ns"],
        nt=g["nt"],
        perturbation=P,
        perturbation_dg=dP,
    )
    geom.validate()
    return geom


def solver_config(doc: ConfigDocument, newton_tol=None) -> SolverConfig:
    s = dict(doc.solver)
    s.pop("delta", None)
    if "newton_tol" not in s and newton_tol is not None:
        s["newton_tol"] = newton_tol
    if "eps_schedule" in s:
        s["eps_schedule"] = tuple(s["eps_schedule"])
    return SolverConfig(**s)


def _field_fn(doc, path, n):
    e = doc.exprs[path]
    return lambda x: ex.evaluate_on(e, x, n)


def build_instance(doc: ConfigDocument, geom=None):
    geom = build_geometry(doc) if geom is None else geom
    n = geom.n
    man = doc.data.get("manufactured")
    if man is not None:
        return manufactured_instance(geom, doc.exprs["manufactured.u_star"], doc.data["chi"], mode=man["mode"],
                                     formulation=man["formulation"])
    rhs = doc.data["rhs"]
    kw = {}
    if "phi_tilde" in rhs:
        kw["phi_tilde"] = _field_fn(doc, "rhs.phi_tilde", n)
    else:
        kw["phi"] = _field_fn(doc, "rhs.phi", n)
    return instance_from_sources(geom, doc.data["chi"], boundary=_field_fn(doc, "boundary", n),
                                 degenerate=rhs["degenerate"], formulation=doc.command["formulation"], **kw)


def _strictly_decreasing(seq):
    return all(b < a for a, b in zip(seq, seq[1:]))


def _ratios(errors):
    return [None] + [a / b if b > 0 else float("inf") for a, b in zip(errors, errors[1:])]


# --------------------------------------------------------------------------
# suites


def run_identities(doc, rep, rng):
    cmd = doc.command
    rows = []
    for n in cmd.get("n_values", DEFAULT_N_VALUES):
        r = sf.identity_suite(int(n), cmd["samples"], rng)
        rows.append(r)
        total = r["euler"] + r["trace"] + r["sum_f_lower"] + r["newton_maclaurin"] + r["fi_lower"]
        rep.add_check(f"identities_n{n}", total == 0, total, 0)
    cols = ["n", "samples", "euler", "trace", "sum_f_lower", "newton_maclaurin", "fi_lower",
            "max_euler_error", "max_trace_error", "min_newton_maclaurin_gap"]
    rep.add_table("identities", cols, [[r[c] for c in cols] for r in rows])
    structural = []
    for f in (sf.LOG_PN1, sf.LOG_DET):
        s = sf.check_structural_conditions(f, min(cmd["samples"], 10000), int(rng.integers(2**31)), n=3)
        structural.append(s)
        viol = s.ellipticity_violations + s.concavity_violations + s.scaling_violations + s.growth_violations
        rep.add_check(f"structural_{f.name}", s.passed, viol, 0)
    rep.results["identities"] = rows
    rep.results["structural"] = [
        {k: v for k, v in s.__dict__.items() if k != "examples"} for s in structural
    ]


def run_eiglemma(doc, rep, rng):
    cmd = doc.command
    brows, crows = [], []
    for n in cmd.get("n_values", DEFAULT_N_VALUES):
        n = int(n)
        res = bd.sweep_bounds(n, cmd["count"], rng, tuple(cmd["factors"]))
        total = 0
        for (lemma, fac), r in res.items():
            brows.append([n, lemma, float(fac), r["violations"], r["plain_upper_violations"], r["min_margin_low"],
                          r["min_margin_top_lower"], r["min_margin_top_upper"]])
            total += r["violations"]
        rep.add_check(f"bounds_n{n}", total == 0, total, 0)
        card = bd.sweep_cardinality(n, cmd["count"], rng, cmd["points"])
        crows.append([n, card["instances"], card["nonconstant"], card["wrong_count"]])
        bad = card["nonconstant"] + card["wrong_count"]
        rep.add_check(f"cardinality_n{n}", bad == 0, bad, 0)
    rep.add_table("bounds", ["n", "lemma", "factor", "violations", "plain_upper_violations", "min_margin_low",
                             "min_margin_top_lower", "min_margin_top_upper"], brows)
    rep.add_table("cardinality", ["n", "instances", "nonconstant", "wrong_count"], crows)


def poisson_study(geom: ProductGeometry, ns_values, tol=1e-12):
    """Errors of the default factor solve against ``2(s - s0)(s - s0 - L)``."""
    rows = []
    for ns in ns_values:
        g = geom.with_nodes(geom.torus_nodes, int(ns), geom.nt)
        sol = solve_factor_poisson(g, tol=tol)
        s = sol.grid.coords()[..., 0]
        exact = 2 * (s - g.s0) * (s - g.s0 - g.L)
        rows.append({"ns": int(ns), "error": float(np.max(np.abs(sol.h - exact))), "residual": sol.residual,
                     "iterations": sol.iterations, "max_interior_h": float(sol.h[1:-1].max()),
                     "max_normal_derivative": float(sol.normal_derivative.max())})
    ratios = _ratios([r["error"] for r in rows])
    for r, q in zip(rows, ratios):
        r["ratio"] = q
    return rows


def run_poisson(doc, rep, rng):
    cmd = doc.command
    geom = build_geometry(doc)
    grids = [g[1] for g in cmd["grids"]] if "grids" in cmd else [32, 64, 128]
    rows = poisson_study(geom, grids)
    rep.add_table("convergence", ["ns", "error", "ratio", "residual", "iterations"],
                  [[r[c] for c in ("ns", "error", "ratio", "residual", "iterations")] for r in rows])
    rep.results["poisson"] = rows
    sign = max(max(r["max_interior_h"], r["max_normal_derivative"]) for r in rows)
    rep.add_check("factor_negative_with_negative_normal_derivative", sign < 0, sign, 0.0)
    rep.add_check("finest_error", rows[-1]["error"] < cmd["max_error"], rows[-1]["error"], cmd["max_error"])
    lo, hi = cmd["ratio_band"]
    for r in rows[1:]:
        rep.add_check(f"ratio_ns{r['ns']}", lo <= r["ratio"] <= hi, r["ratio"], [lo, hi])


def _solve_tables(rep, srep, name="residuals"):
    rows = [[i, r, m, (srep.step_lengths[i - 1] if i > 0 else None)]
            for i, (r, m) in enumerate(zip(srep.residual_history, srep.cone_margin_history))]
    rep.add_table(name, ["iteration", "residual", "cone_margin", "step"], rows)


def _solve_summary(srep):
    return {k: v for k, v in srep.__dict__.items() if k not in ("levels",)}


def run_solve(doc, rep, rng):
    cfg = solver_config(doc)
    inst = build_instance(doc)
    u, srep, sub = solve_instance(inst, cfg, doc.solver["delta"])
    srep.estimates = estimate_diagnostics(u, inst).as_dict()
    rep.results["solve"] = _solve_summary(srep)
    _solve_tables(rep, srep)
    rep.add_check("converged", srep.converged, srep.verified_residual, cfg.newton_tol)
    rep.add_check("cone_everywhere", srep.comparison["cone_everywhere"])
    rep.add_check("sub_le_u", srep.comparison["sub_le_u"], srep.comparison["max_sub_minus_u"], cfg.comparison_slack)
    rep.add_check("u_le_super", srep.comparison["u_le_super"], srep.comparison["max_u_minus_super"],
                  cfg.comparison_slack)
    if "u_star" in inst._cache:
        err = float(np.max(np.abs(u - inst._cache["u_star"])))
        rep.results["error_vs_u_star"] = err
        rep.add_table("error", ["grid", "error"], [["x".join(map(str, inst.grid.shape)), err]])


def run_convergence(doc, rep, rng):
    if "manufactured" not in doc.data:
        raise PreconditionViolation("convergence needs a manufactured block")
    cfg = solver_config(doc)
    base = build_geometry(doc)
    grids = doc.command.get("grids", DEFAULT_GRIDS)
    rows = []
    for tn, ns, nt in grids:
        geom = base.with_nodes((tn,) * len(base.torus_nodes), ns, nt)
        inst = build_instance(doc, geom)
        u, srep, _ = solve_instance(inst, cfg, doc.solver["delta"])
        err = float(np.max(np.abs(u - inst._cache["u_star"])))
        rows.append({"grid": "x".join(map(str, inst.grid.shape)), "error": err,
                     "newton_iterations": srep.newton_iterations, "converged": srep.converged,
                     "verified_residual": srep.verified_residual, "quadratic_kappa": srep.quadratic_kappa})
        rep.add_check(f"converged_{rows[-1]['grid']}", srep.converged, srep.verified_residual, cfg.newton_tol)
    for r, q in zip(rows, _ratios([r["error"] for r in rows])):
        r["ratio"] = q
    rep.add_table("convergence", ["grid", "error", "ratio", "newton_iterations", "verified_residual"],
                  [[r[c] for c in ("grid", "error", "ratio", "newton_iterations", "verified_residual")] for r in rows])
    rep.results["convergence"] = rows
    lo, hi = doc.command["ratio_band"]
    for r in rows[1:]:
        rep.add_check(f"ratio_{r['grid']}", lo <= r["ratio"] <= hi, r["ratio"], [lo, hi])


def degenerate_checks(levels, last=5, sup_factor=2.0, ratio_factor=3.0):
    """Uniform-bound checks over a regularised family; returns ``(name, passed, value, limit)`` tuples."""
    sup = [lv["estimates"]["sup_laplacian"] for lv in levels]
    br = [lv["estimates"]["boundary_ratio"] for lv in levels]
    c1 = [lv["c1_difference"] for lv in levels[1:]]
    tail = sup[-last:]
    sup_spread = max(tail) / min(tail) if min(tail) > 0 else float("inf")
    br_spread = max(br) / min(br) if min(br) > 0 else float("inf")
    mono = max([lv.get("monotone_violation", 0.0) for lv in levels] + [0.0])
    return [
        ("all_levels_converged", all(lv["converged"] for lv in levels), sum(lv["converged"] for lv in levels), len(levels)),
        ("sup_laplacian_tail_spread", sup_spread <= sup_factor, sup_spread, sup_factor),
        ("boundary_ratio_spread", br_spread <= ratio_factor, br_spread, ratio_factor),
        ("c1_differences_decreasing", _strictly_decreasing(c1), None, None),
        ("monotone_in_eps", mono <= 1e-6, mono, 1e-6),
    ]


def run_degenerate(doc, rep, rng):
    if "phi_tilde" not in doc.data["rhs"]:
        raise PreconditionViolation("degenerate needs rhs.phi_tilde")
    cfg = solver_config(doc, newton_tol=DEGENERATE_NEWTON_TOL)
    inst = build_instance(doc)
    rr = validate_rhs(inst)
    rep.results["rhs"] = rr.__dict__.copy()
    rep.add_check("rhs_valid", rr.passed)
    if not rr.passed:
        return
    _, srep = degenerate_solve(inst, cfg, doc.solver["delta"])
    rep.results["levels"] = srep.levels
    rep.results["subsolution_t"] = srep.subsolution_t
    est = ["sup_laplacian", "sup_boundary_laplacian", "sup_grad", "boundary_ratio", "interior_ratio",
           "tangential_normal_ratio", "mixed_ratio"]
    rows = [[lv["eps"], lv["newton_iterations"], lv["final_residual"]] + [lv["estimates"][k] for k in est]
            + [lv.get("c1_difference"), lv.get("monotone_violation")] for lv in srep.levels]
    rep.add_table("levels", ["eps", "newton_iterations", "residual"] + est + ["c1_difference", "monotone_violation"],
                  rows)
    for name, ok, val, lim in degenerate_checks(srep.levels):
        rep.add_check(name, ok, val, lim)


def run_shrink(doc, rep, rng):
    cfg = solver_config(doc)
    inst = build_instance(doc)
    geom = inst.geometry
    hmin = float(-solve_factor_poisson(geom).h.min())
    alphas = [float(a) * hmin for a in doc.command["alphas"]]
    _, srep = domain_shrink_solve(inst, alphas, cfg, doc.solver["delta"])
    rep.results["min_h_magnitude"] = hmin
    rep.results["levels"] = srep.levels
    rows = [[lv["alpha"], lv["s_interval"][0], lv["s_interval"][1], lv["newton_iterations"], lv["final_residual"],
             lv["max_sub_minus_u"], lv["max_u_minus_w"], lv.get("c0_difference"), lv.get("c1_difference")]
            for lv in srep.levels]
    rep.add_table("levels", ["alpha", "s_lo", "s_hi", "newton_iterations", "residual", "max_sub_minus_u",
                             "max_u_minus_w", "c0_difference", "c1_difference"], rows)
    for k, lv in enumerate(srep.levels):
        rep.add_check(f"ordering_level{k}", lv["ordering_ok"], max(lv["max_sub_minus_u"], lv["max_u_minus_w"]),
                      cfg.comparison_slack)
        rep.add_check(f"converged_level{k}", lv["converged"], lv["final_residual"], cfg.newton_tol)


SUITES = {
    "verify-identities": run_identities,
    "verify-eiglemma": run_eiglemma,
    "poisson": run_poisson,
    "solve": run_solve,
    "degenerate": run_degenerate,
    "shrink": run_shrink,
    "convergence": run_convergence,
}


def run_command(doc: ConfigDocument, command=None, seed=None, config_text="") -> ReportDocument:
    """Run one suite; domain errors end up in ``report.error`` instead of propagating."""
    command = command or doc.command.get("suite")
    master = doc.command["seed"] if seed is None else int(seed)
    if command is None:
        return ReportDocument(make_metadata(None, config_text, master, None))
    if command not in SUITES:
        raise ValueError(f"unknown command {command!r}")
    ss = suite_seed(master, command)
    rep = ReportDocument(make_metadata(command, config_text, master, ss), suite=command)
    rng = np.random.default_rng(ss)
    try:
        SUITES[command](doc, rep, rng)
    except (NMAError, ValueError) as err:
        rep.error = {"type": type(err).__name__, "message": str(err)}
    return rep
