"""Serialisation of reports to CSV and JSON.

Floats are written with 17 significant digits, rationals as ``"p/q"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import singledispatch

import numpy as np

from .classical import StochasticMatrix
from .egorov import EGOROV_COLUMNS, EgorovReport, EgorovScaling
from .errors import ConfigError
from .interval_map import ValidationReport
from .metric_graph import RelationReport
from .quantizer import UnitaryPropagator
from .spectral import SWEEP_COLUMNS, VarianceReport

FORMATS = ("csv", "json")


@dataclass
class Table:
    columns: tuple
    rows: list


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def parse_value(text: str):
    """Inverse of :func:`format_value` for the types it emits."""
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    if "/" in text:
        try:
            return Fraction(text)
        except ValueError:
            return text
    try:
        return float(text)
    except ValueError:
        return text


# -- tables -------------------------------------------------------------------

@singledispatch
def to_table(report) -> Table:
    raise ConfigError(f"no tabular form for {type(report).__name__}")


@to_table.register
def _(report: Table):
    return report


@to_table.register
def _(report: list):
    if report and all(isinstance(r, VarianceReport) for r in report):
        return Table(SWEEP_COLUMNS, [row for r in report for row in r.rows()])
    raise ConfigError("only lists of variance reports can be tabulated")


@to_table.register
def _(report: VarianceReport):
    return Table(SWEEP_COLUMNS, list(report.rows()))


@to_table.register
def _(report: EgorovScaling):
    return Table(EGOROV_COLUMNS, list(report.rows()))


@to_table.register
def _(report: EgorovReport):
    return Table(EGOROV_COLUMNS[:-1], [report.to_dict()])


@to_table.register
def _(report: StochasticMatrix):
    return Table(("row", "col", "value"),
                 [{"row": j, "col": k, "value": v} for j, k, v in report.triples()])


@to_table.register
def _(report: UnitaryPropagator):
    coo = report.sparse.tocsr()
    coo.sort_indices()
    coo = coo.tocoo()
    return Table(("row", "col", "re", "im"),
                 [{"row": int(r), "col": int(c), "re": float(v.real), "im": float(v.imag)}
                  for r, c, v in zip(coo.row, coo.col, coo.data)])


@to_table.register
def _(report: ValidationReport):
    d = report.to_dict()
    return Table(("check", "value"), [{"check": k, "value": format_value(v) if not isinstance(v, list)
                                       else ";".join(map(str, v))} for k, v in d.items()])


def relation_table(reports: list[RelationReport], include_roots: bool = True) -> Table:
    cols = ("row_type", "lambda_n", "bracket_k", "matrix_element", "weight", "Lambda", "spacings",
            "root_count", "mean_count", "V_S", "V_S_hat", "weighted", "VU_average", "residual",
            "alt_rhs", "alt_residual")
    rows = []
    for r in reports:
        if include_roots and r.spectrum is not None and r.spectrum.matrix_elements is not None:
            sp_ = r.spectrum
            for lam, k, a, w in zip(sp_.roots, sp_.branches, sp_.matrix_elements, sp_.weights):
                rows.append({"row_type": "root", "lambda_n": float(lam), "bracket_k": int(k),
                             "matrix_element": float(a), "weight": float(w), "Lambda": r.Lam})
        rows.append({"row_type": "summary", "Lambda": r.Lam, "spacings": r.spacings,
                     "root_count": r.root_count, "mean_count": r.mean_count, "V_S": r.VS,
                     "V_S_hat": r.VS_hat, "weighted": r.weighted, "VU_average": r.VU_average,
                     "residual": r.residual, "alt_rhs": r.alt_rhs,
                     "alt_residual": r.alt_residual})
    return Table(cols, rows)


@to_table.register
def _(report: RelationReport):
    return relation_table([report])


# -- JSON -----------------------------------------------------------------------

def _json_encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, Fraction):
        return _json_encode(format_value(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = [f"{_json_encode(str(k))}: {_json_encode(v)}" for k, v in obj.items()]
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_encode(v) for v in obj) + "]"
    raise ConfigError(f"cannot encode {type(obj).__name__} as JSON")


def dumps(obj) -> str:
    return _json_encode(obj) + "\n"


def to_json_obj(report):
    if isinstance(report, dict):
        return report
    if isinstance(report, EgorovScaling):
        return {"status": report.status, "fitted_exponent": report.exponent,
                "constant": report.constant, "ratios": report.ratios,
                "levels": [r.to_dict() for r in report.reports]}
    if isinstance(report, ValidationReport):
        d = report.to_dict()
        d["slopes"] = [format_value(s) if isinstance(s, Fraction) else s for s in d["slopes"]]
        return d
    table = to_table(report)
    return {"columns": list(table.columns),
            "rows": [[r.get(c) for c in table.columns] for r in table.rows]}


def emit_report(report, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        table = to_table(report)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([format_value(row.get(c)) for c in table.columns])
        return buf.getvalue().encode()
    if fmt == "json":
        return dumps(to_json_obj(report)).encode()
    raise ConfigError(f"unsupported format {fmt!r}; choose from {FORMATS}")


def parse_csv(data: bytes) -> list[dict]:
    reader = csv.reader(io.StringIO(data.decode()))
    header = next(reader)
    return [{c: parse_value(v) for c, v in zip(header, row)} for row in reader]
