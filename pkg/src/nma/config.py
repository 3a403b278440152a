"""Configuration documents: JSON text, schema validation and defaults.

A document has the blocks ``geometry``, ``chi``, ``rhs``, ``boundary``,
``manufactured``, ``solver`` and ``command``; every block is optional and
filled with defaults.  Unknown keys are rejected with their key path.
Expressions are parsed at load time.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field

from . import expr as ex
from .errors import ParseError, SchemaError

COMMANDS = ("verify-identities", "verify-eiglemma", "poisson", "solve", "degenerate", "shrink", "convergence")
MIN_GRID = 8

# (type, default) per key; ``None`` default means "absent unless given"
_NUM = (int, float)

GEOMETRY = {
    "n": (int, 2),
    "torus_periods": (list, None),
    "L": (_NUM, 1.0),
    "t_period": (_NUM, 2 * math.pi),
    "s0": (_NUM, 0.0),
    "torus_nodes": ((int, list), 16),
    "ns": (int, 32),
    "nt": (int, 16),
    "perturbation": (dict, None),
}
SOLVER = {
    "newton_tol": (_NUM, None),
    "max_newton_iters": (int, 30),
    "damping": (_NUM, 1.0),
    "continuation_steps": (int, 1),
    "cone_margin": (_NUM, 1e-8),
    "eps_schedule": (list, None),
    "linear_tol": (_NUM, 1e-10),
    "delta": (_NUM, 0.1),
}
RHS = {
    "phi": (str, None),
    "phi_tilde": (str, None),
    "degenerate": (bool, False),
}
MANUFACTURED = {
    "u_star": (str, None),
    "mode": (str, "analytic"),
    "formulation": (str, "gtilde"),
}
COMMAND = {
    "suite": (str, None),
    "seed": (int, 0),
    "samples": (int, 100000),
    "count": (int, 10000),
    "n_values": (list, None),
    "factors": (list, [1.0, 10.0]),
    "points": (int, 50),
    "grids": (list, None),
    "alphas": (list, [0.2, 0.1, 0.05]),
    "formulation": (str, "gtilde"),
    "max_error": (_NUM, 1e-4),
    "ratio_band": (list, [3.2, 4.8]),
}
TOP = ("geometry", "chi", "rhs", "boundary", "manufactured", "solver", "command")


@dataclass
class ConfigDocument:
    """Validated configuration: a normalised plain-data view plus parsed ASTs."""

    data: dict
    exprs: dict = field(default_factory=dict)

    @property
    def geometry(self):
        return self.data["geometry"]

    @property
    def solver(self):
        return self.data["solver"]

    @property
    def command(self):
        return self.data["command"]

    def __eq__(self, other):
        return isinstance(other, ConfigDocument) and self.data == other.data and self.exprs == other.exprs


def _type_ok(value, typ):
    if typ is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if typ == _NUM or typ == (_NUM):
        return isinstance(value, (int, float))
    return isinstance(value, typ)


def _block(raw, spec, path):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError("expected an object", path)
    for k in raw:
        if k not in spec:
            raise SchemaError(f"unknown key {k!r}", f"{path}.{k}" if path else k)
    out = {}
    for k, (typ, default) in spec.items():
        if k in raw and raw[k] is not None:
            v = raw[k]
            if not _type_ok(v, typ):
                raise SchemaError(f"wrong type {type(v).__name__}", f"{path}.{k}")
            out[k] = copy.deepcopy(v)
        elif default is not None:
            out[k] = copy.deepcopy(default)
    return out


def _expr(text, path, exprs):
    try:
        exprs[path] = ex.parse(text)
    except ParseError as err:
        wrapped = ParseError(f"{path}: {err}")
        wrapped.line, wrapped.column = err.line, err.column
        raise wrapped from None


_CHI = re.compile(r"^\s*(?:(?P<c>[+]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*\*\s*)?omega\s*$")


def parse_chi(spec, path="chi"):
    """``"c*omega"`` (or ``"omega"``) to the scale ``c``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if not isinstance(spec, str):
        raise SchemaError("chi must be of the form 'c*omega' or a number", path)
    m = _CHI.match(spec)
    if not m:
        raise SchemaError(f"chi {spec!r} is not of the form 'c*omega'", path)
    return float(m.group("c")) if m.group("c") else 1.0


def _perturbation(raw, n, exprs):
    if not isinstance(raw, dict):
        raise SchemaError("expected an object of matrix entries", "geometry.perturbation")
    out = {}
    for key, val in raw.items():
        p = f"geometry.perturbation.{key}"
        if not re.fullmatch(r"[1-9][0-9]*[1-9][0-9]*", key) or len(key) != 2:
            raise SchemaError("entry keys are 'ij' with 1 <= i <= j <= n", p)
        i, j = int(key[0]), int(key[1])
        if not (1 <= i <= j <= n):
            raise SchemaError("entry keys are 'ij' with 1 <= i <= j <= n", p)
        if isinstance(val, str):
            _expr(val, p + ".re", exprs)
            out[key] = {"re": val}
        elif isinstance(val, dict):
            for k in val:
                if k not in ("re", "im"):
                    raise SchemaError(f"unknown key {k!r}", f"{p}.{k}")
            if i == j and "im" in val:
                raise SchemaError("diagonal entries are real", p + ".im")
            for k, text in val.items():
                if not isinstance(text, str):
                    raise SchemaError("expression must be a string", f"{p}.{k}")
                _expr(text, f"{p}.{k}", exprs)
            out[key] = dict(val)
        else:
            raise SchemaError("entry must be an expression or {re, im}", p)
    return out


def validate(raw) -> ConfigDocument:
    if not isinstance(raw, dict):
        raise SchemaError("top level must be an object")
    for k in raw:
        if k not in TOP:
            raise SchemaError(f"unknown key {k!r}", k)
    exprs = {}
    data = {}
    geo = _block(raw.get("geometry"), GEOMETRY, "geometry")
    n = geo["n"]
    if n < 2:
        raise SchemaError("n must be at least 2", "geometry.n")
    k = 2 * (n - 1)
    if "torus_periods" in geo:
        tp = geo["torus_periods"]
        if len(tp) != k or not all(_type_ok(v, _NUM) and v > 0 for v in tp):
            raise SchemaError(f"need {k} positive periods", "geometry.torus_periods")
    tn = geo["torus_nodes"]
    tn = [tn] * k if isinstance(tn, int) else tn
    if len(tn) != k or not all(isinstance(v, int) and not isinstance(v, bool) for v in tn):
        raise SchemaError(f"need {k} integer node counts", "geometry.torus_nodes")
    geo["torus_nodes"] = tn
    for name, v in [("torus_nodes", min(tn)), ("ns", geo["ns"]), ("nt", geo["nt"])]:
        if v < MIN_GRID:
            raise SchemaError(f"grid sizes must be at least {MIN_GRID}", f"geometry.{name}")
    if not geo["L"] > 0 or not geo["t_period"] > 0:
        raise SchemaError("lengths must be positive", "geometry")
    if "perturbation" in geo:
        geo["perturbation"] = _perturbation(geo["perturbation"], n, exprs)
    data["geometry"] = geo

    chi = raw.get("chi", "1*omega")
    data["chi"] = parse_chi(chi)
    rhs = _block(raw.get("rhs"), RHS, "rhs")
    if "phi" in rhs and "phi_tilde" in rhs:
        raise SchemaError("give only one of phi and phi_tilde", "rhs")
    if "phi" not in rhs and "phi_tilde" not in rhs:
        rhs["phi"] = "1"
    for key in ("phi", "phi_tilde"):
        if key in rhs:
            _expr(rhs[key], f"rhs.{key}", exprs)
    data["rhs"] = rhs
    bnd = raw.get("boundary", "0")
    if not isinstance(bnd, str):
        raise SchemaError("boundary must be an expression string", "boundary")
    _expr(bnd, "boundary", exprs)
    data["boundary"] = bnd
    if "manufactured" in raw:
        man = _block(raw["manufactured"], MANUFACTURED, "manufactured")
        if "u_star" not in man:
            raise SchemaError("u_star is required", "manufactured.u_star")
        if man["mode"] not in ("analytic", "discrete"):
            raise SchemaError("mode must be 'analytic' or 'discrete'", "manufactured.mode")
        if man["formulation"] not in ("gtilde", "standard"):
            raise SchemaError("formulation must be 'gtilde' or 'standard'", "manufactured.formulation")
        _expr(man["u_star"], "manufactured.u_star", exprs)
        data["manufactured"] = man
    sol = _block(raw.get("solver"), SOLVER, "solver")
    for key in ("newton_tol", "cone_margin", "linear_tol", "delta"):
        if key in sol and not sol[key] > 0:
            raise SchemaError("must be positive", f"solver.{key}")
    if not 0 < sol["damping"] <= 1:
        raise SchemaError("damping must lie in (0, 1]", "solver.damping")
    for key in ("max_newton_iters", "continuation_steps"):
        if sol[key] < 1:
            raise SchemaError("must be at least 1", f"solver.{key}")
    if "eps_schedule" in sol and not all(_type_ok(e, _NUM) and e > 0 for e in sol["eps_schedule"]):
        raise SchemaError("eps values must be positive numbers", "solver.eps_schedule")
    data["solver"] = sol
    cmd = _block(raw.get("command"), COMMAND, "command")
    if "suite" in cmd and cmd["suite"] not in COMMANDS:
        raise SchemaError(f"unknown suite {cmd['suite']!r}", "command.suite")
    if cmd["seed"] < 0:
        raise SchemaError("seed must be nonnegative", "command.seed")
    if "grids" in cmd:
        for i, g in enumerate(cmd["grids"]):
            if not (isinstance(g, list) and len(g) == 3 and all(isinstance(v, int) and v >= MIN_GRID for v in g)):
                raise SchemaError(f"grid entries are [torus, ns, nt] with sizes >= {MIN_GRID}",
                                  f"command.grids[{i}]")
    data["command"] = cmd
    return ConfigDocument(data, exprs)


def parse_config(text: str) -> ConfigDocument:
    """Parse and validate one JSON document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.lineno, err.colno) from None
    return validate(raw)


def emit_config(doc: ConfigDocument) -> str:
    """Canonical JSON text of a validated document (sorted keys)."""
    return json.dumps(doc.data, sort_keys=True, indent=2)
