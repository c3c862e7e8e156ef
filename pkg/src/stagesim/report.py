"""Tabular output for simulation reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable

from .engine import MetricsReport
from .errors import ReportIoError

CSV_COLUMNS = (
    "config_label",
    "policy",
    "n_contexts",
    "n_streams",
    "oversubscription",
    "seed",
    "jps",
    "dmr_hp",
    "dmr_lp",
    "resp_hp_mean",
    "resp_hp_p95",
    "resp_lp_mean",
    "resp_lp_p95",
    "accepted_hp",
    "accepted_lp",
    "rejected_hp",
    "rejected_lp",
)


def report_row(report: MetricsReport) -> dict:
    """Project a report onto the flat row shape shared by CSV and JSON output."""
    return {
        "config_label": report.label,
        "policy": report.policy,
        "n_contexts": report.n_contexts,
        "n_streams": report.n_streams,
        "oversubscription": report.oversubscription,
        "seed": report.seed,
        "jps": report.jps,
        "dmr_hp": report.dmr_hp,
        "dmr_lp": report.dmr_lp,
        "resp_hp_mean": report.response_hp.mean,
        "resp_hp_p95": report.response_hp.p95,
        "resp_lp_mean": report.response_lp.mean,
        "resp_lp_p95": report.response_lp.p95,
        "accepted_hp": report.accepted_hp,
        "accepted_lp": report.accepted_lp,
        "rejected_hp": report.rejected_hp,
        "rejected_lp": report.rejected_lp,
    }


def render_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report_row(report))
    return buf.getvalue()


def render_json(reports: Iterable[MetricsReport]) -> str:
    return json.dumps([report_row(r) for r in reports], indent=2) + "\n"


def emit_report(reports: Iterable[MetricsReport], fmt: str = "csv",
                path: str | Path | None = None) -> str:
    """Render reports as csv or json; write to path when given.

    Returns the rendered text either way so callers can print it.
    """
    if fmt == "csv":
        text = render_csv(reports)
    elif fmt == "json":
        text = render_json(reports)
    else:
        raise ReportIoError(f"unknown report format {fmt!r} (want csv or json)")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise ReportIoError(f"cannot write report to {path}: {exc}") from exc
    return text


def load_rows(path: str | Path):
    """Read back a report file (csv or json, sniffed from the suffix)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ReportIoError(f"cannot read report {path}: {exc}") from exc
    if p.suffix == ".json":
        return json.loads(text)
    reader = csv.DictReader(io.StringIO(text))
    return list(reader)
