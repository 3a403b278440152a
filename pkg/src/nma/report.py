"""Report documents and their deterministic JSON / CSV serialisation.

Floats are printed with 17 significant digits, keys keep insertion order
and no wall-clock data is stored, so a fixed configuration and seed give
byte-identical output.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

CONVENTIONS = {
    "coordinates": "real coordinates ordered x1, y1, ..., x_{n-1}, y_{n-1}, s, t with z_k = x_k + i y_k, w = s + i t",
    "d_z": "d/dz = (d/dx - i d/dy) / 2",
    "laplacian": "Delta u = g^{i jbar} u_{i jbar}; on the flat factor this is one quarter of the real Laplacian",
    "grad_norm": "|grad u|^2 = 4 g^{i jbar} u_i u_jbar",
    "operator": "f = log P_{n-1}(lambda) = sum_i log mu_i, mu_i = sum_{j != i} lambda_j",
    "psi": "psi = log phi + n log(n - 1)",
    "metric": "G[i, j] = g_{i jbar}; torsion T^k_ij = g^{k lbar}(d_i g_{j lbar} - d_j g_{i lbar})",
    "grid": "node counts include both Dirichlet end points; periodic axes exclude the repeated end",
}


@dataclass
class ReportDocument:
    metadata: dict
    suite: str | None = None
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    error: dict | None = None

    @property
    def passed(self):
        return self.error is None and all(c["passed"] for c in self.checks)

    def add_check(self, name, passed, value=None, limit=None):
        self.checks.append({"name": name, "passed": bool(passed), "value": value, "limit": limit})

    def add_table(self, name, columns, rows):
        self.tables[name] = {"columns": list(columns), "rows": [list(r) for r in rows]}


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def make_metadata(command, config_text, seed, suite_seed):
    return {
        "tool": "nma",
        "version": __version__,
        "command": command,
        "config_sha256": config_hash(config_text),
        "seed": seed,
        "suite_seed": suite_seed,
        "conventions": dict(CONVENTIONS),
    }


def to_plain(obj):
    """Recursively convert numpy, dataclass and tuple values to JSON data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _dump(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(k) + ": ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                _dump(v, indent, level, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    else:
        out.append(json.dumps(str(obj)))


def dumps(obj, indent=2) -> str:
    out = []
    _dump(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def _document(rep: ReportDocument):
    return {
        "metadata": rep.metadata,
        "suite": rep.suite,
        "passed": rep.passed,
        "checks": rep.checks,
        "results": rep.results,
        "tables": rep.tables,
        "error": rep.error,
    }


def _csv_cell(v):
    v = to_plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v).strip('"')
    if isinstance(v, int):
        return str(v)
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def emit_report(rep: ReportDocument, fmt="json") -> str:
    """Serialise a report as JSON or as flattened CSV sections."""
    if fmt == "json":
        return dumps(_document(rep))
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    suite = rep.suite or "report"
    lines = ["# metadata", "key,value"]
    for k, v in rep.metadata.items():
        if k != "conventions":
            lines.append(f"{k},{_csv_cell(v)}")
    lines.append(f"passed,{_csv_cell(rep.passed)}")
    if rep.checks:
        lines += ["", f"# {suite}.checks", "name,passed,value,limit"]
        for c in rep.checks:
            lines.append(",".join(_csv_cell(c[k]) for k in ("name", "passed", "value", "limit")))
    for name, tab in rep.tables.items():
        lines += ["", f"# {suite}.{name}", ",".join(tab["columns"])]
        for row in tab["rows"]:
            lines.append(",".join(_csv_cell(v) for v in row))
    if rep.error is not None:
        lines += ["", f"# {suite}.error", "type,message", f"{_csv_cell(rep.error['type'])},{_csv_cell(rep.error['message'])}"]
    return "\n".join(lines) + "\n"
