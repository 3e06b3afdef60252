"""Report serialization: canonical JSON documents and delimited companions.

Floats are rounded to 12 significant digits before writing, which keeps the
bytes stable across runs while hiding last-ulp noise between computation
routes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


def round_floats(value, digits: int = 12):
    if isinstance(value, float):
        # the +0.0 folds -0.0 into 0.0 so both computation routes agree
        return float(format(value, f".{digits}g")) + 0.0
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, list):
        return [round_floats(v, digits) for v in value]
    return value


def report_to_bytes(report: dict) -> bytes:
    return (json.dumps(round_floats(report), indent=1) + "\n").encode()


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_bytes(report_to_bytes(report))


def parse_report(data: bytes | str) -> dict:
    if isinstance(data, bytes):
        data = data.decode()
    return json.loads(data)


def load_report(path: str | Path) -> dict:
    return parse_report(Path(path).read_bytes())


def write_table(rows: list[dict], path: str | Path) -> None:
    """Write dict rows as CSV with 12-significant-digit floats."""
    if not rows:
        raise ValueError("write_table: no rows")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format(v, ".12g") if isinstance(v, float) else v
                             for k, v in row.items()})


def loss_series_rows(series) -> list[dict]:
    return [{"step": i, "l_qv": r.l_qv, "l_qc": r.l_qc, "l_cc": r.l_cc,
             "l_ma": r.l_ma} for i, r in enumerate(series)]
