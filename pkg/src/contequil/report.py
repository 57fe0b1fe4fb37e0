"""Fixed-column CSV serialization of sweep reports."""
from __future__ import annotations

import csv
import io
import math

from .scenario import CHECKS_IN_ROW, Row, SweepReport

BASE_COLUMNS = (
    "scenario", "kind", "T", "delta", "N", "D", "tolerance",
    "k_term", "f_term", "beta_sq_sum", "r_cross_term", "total", "empirical_sigma_sq",
)
EXTRA_COLUMNS = (
    "povm_chain_rhs", "toy_envelope_total", "toy_match", "toy_generic_total", "d_eff", "dephasing_distance",
)


def columns() -> list[str]:
    cols = list(BASE_COLUMNS)
    for name in CHECKS_IN_ROW:
        cols += [f"{name}_lhs", f"{name}_rhs", f"{name}_pass"]
    cols += list(EXTRA_COLUMNS)
    cols.append("pass_all")
    return cols


HEADER_COMMENT = (
    "# contequil report v1; each <check>_pass is <check>_lhs <= <check>_rhs + tolerance; "
    "parts_order compares the required convergence order (lhs) with the observed order (rhs); "
    "pass_all also requires toy_match <= 1e-8 when present; empty cells mean not evaluated"
)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def row_values(row: Row) -> list[str]:
    out = {
        "scenario": row.scenario, "kind": row.kind, "T": float(row.T), "delta": row.delta, "N": row.N,
        "D": row.D, "tolerance": row.tolerance, "k_term": row.k_term, "f_term": row.f_term,
        "beta_sq_sum": row.beta_sq_sum, "r_cross_term": row.r_cross_term, "total": row.total,
        "empirical_sigma_sq": row.empirical_sigma_sq,
    }
    for name in CHECKS_IN_ROW:
        lhs, rhs = row.checks.get(name, (None, None))
        out[f"{name}_lhs"] = None if lhs is None else float(lhs)
        out[f"{name}_rhs"] = None if rhs is None else float(rhs)
        out[f"{name}_pass"] = row.passes(name)
    for name in EXTRA_COLUMNS:
        v = row.extras.get(name)
        out[name] = None if v is None else float(v)
    out["pass_all"] = row.pass_all
    return [format_value(out[c]) for c in columns()]


def to_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    buf.write(HEADER_COMMENT + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns())
    for row in report.rows:
        writer.writerow(row_values(row))
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def recompute_pass(record: dict[str, str], check: str) -> bool | None:
    """Pass flag of ``check`` recomputed from the numeric columns of a parsed row."""
    lhs, rhs = record[f"{check}_lhs"], record[f"{check}_rhs"]
    if lhs == "" or rhs == "":
        return None
    return float(lhs) <= float(rhs) + float(record["tolerance"])
