"""Delimited reports and JSON summaries for verification sweeps.

One sweep produces up to three files with a shared basename:

* ``<name>.csv``       RFC 4180 rows, one per sweep point, fixed leading
                       columns then experiment-specific extras in sorted
                       order.  Byte-identical across runs for the same
                       configuration and seed.
* ``<name>.summary.json``  canonical JSON (sorted keys, no whitespace) with
                       parameters, summary numbers, verdict, and the files
                       written.  Also byte-identical.
* ``<name>.png``       a rendered figure; PNG encoding is not covered by
                       the byte-stability guarantee.

Floats are written with ``repr``, which round-trips exactly.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from .prf import canonical_json, stable_digest
from .verify import SweepReport

CORE_COLUMNS = (
    "experiment",
    "seed",
    "spec_digest",
    "parameter",
    "estimate",
    "stderr",
    "exact_or_bound",
    "pass",
)


def _plain(obj):
    """Coerce numpy scalars and containers to plain JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, float):
        return float(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, float) or isinstance(value, np.floating):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def report_basename(report: SweepReport) -> str:
    """Embeds the experiment, the seed, the family digest (when the sweep
    has one), and a parameter tag, so distinct configurations never collide."""
    tag = stable_digest(
        {
            "experiment": report.experiment,
            "seed": report.seed,
            "spec_digest": report.spec_digest,
            "params": _plain(report.params),
        },
        length=8,
    )
    spec_part = f"_spec{report.spec_digest[:8]}" if report.spec_digest else ""
    return f"{report.experiment}_seed{report.seed}{spec_part}_{tag}"


def csv_columns(report: SweepReport) -> list[str]:
    extras: set[str] = set()
    for row in report.rows:
        extras.update(row.keys())
    extras -= set(CORE_COLUMNS)
    return list(CORE_COLUMNS) + sorted(extras)


def write_csv(report: SweepReport, path: str) -> None:
    cols = csv_columns(report)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)  # RFC 4180: CRLF rows, quoting as needed
        writer.writerow(cols)
        for row in report.rows:
            record = {
                "experiment": report.experiment,
                "seed": report.seed,
                "spec_digest": report.spec_digest,
                **row,
            }
            writer.writerow([_fmt(record.get(c)) for c in cols])


def write_summary(report: SweepReport, path: str, files: dict[str, str]) -> None:
    payload = _plain(report.to_json())
    payload["files"] = {k: os.path.basename(v) for k, v in sorted(files.items())}
    with open(path, "w") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")


def write_report(
    report: SweepReport, out_dir: str, figures: bool = True
) -> dict[str, str]:
    """Write the delimited rows, the JSON summary, and (optionally) the
    figure; returns the paths keyed by kind."""
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report_basename(report))
    paths = {"csv": base + ".csv"}
    write_csv(report, paths["csv"])
    if figures:
        from .figures import render_figure

        paths["figure"] = base + ".png"
        render_figure(report, paths["figure"])
    paths["summary"] = base + ".summary.json"
    write_summary(report, paths["summary"], paths)
    return paths
