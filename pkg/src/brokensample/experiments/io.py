"""CSV emission with a fixed schema and 17-significant-digit floats."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["SCHEMAS", "format_value", "write_csv", "read_csv"]

# Column schema per output file; tests pin these.
SCHEMAS = {
    "estimates": ["theta_star", "replicate", "M", "N", "theta_hat", "loss_at_hat"],
    "timing": ["theta_star", "replicate", "M", "N", "wall_time"],
    "summary": ["theta_star", "M", "N", "replicates", "mean", "sd", "cv", "median_abs_err"],
    "loss_curves": ["theta_star", "M", "N", "replicate", "theta", "loss"],
    "limit_curve": ["theta_star", "theta", "limit_loss"],
    "limit_convergence": ["theta", "is_truth", "M", "expected_loss", "limit_loss", "abs_error"],
    "limit_slopes": ["theta", "is_truth", "slope", "ratio_64_8"],
    "oracle_check": ["check", "max_deviation", "tolerance", "passed"],
}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path, schema: str, rows: Iterable[Sequence]) -> Path:
    """Write ``rows`` (sequences ordered as ``SCHEMAS[schema]``) to ``path``."""
    header = SCHEMAS[schema]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"{schema} row has {len(row)} fields, expected {len(header)}")
        writer.writerow([format_value(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
