"""Report emission: per-session CSV, text tables, and an SVG histogram.

The CSV column order is fixed (session_id, inform, success, turns,
termination, sent_score, sess_score) and all formatting is deterministic so
equal reports are byte-identical.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

from .engine import EvaluationReport
from .errors import PreconditionError

CSV_COLUMNS = ("session_id", "inform", "success", "turns", "termination",
               "sent_score", "sess_score")

NA = "NA"


def _fmt(value, digits: int = 6) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def report_to_csv(report: EvaluationReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.records:
        if r.error is not None:
            continue
        writer.writerow([r.session_id, r.inform, r.success, r.turns, r.termination,
                         _fmt(r.sent_score), _fmt(r.sess_score)])
    return out.getvalue()


def write_csv(path: str | Path, report: EvaluationReport) -> None:
    Path(path).write_text(report_to_csv(report), encoding="utf-8")


def read_csv_rows(path: str | Path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    return rows


def render_table(report: EvaluationReport) -> str:
    agg = report.aggregates
    lines = [
        f"mode             {report.mode}",
        f"sessions         {agg.sessions}",
        f"failures         {agg.failures}",
        f"inform           {_fmt(agg.inform_pct, 2)}",
        f"success          {_fmt(agg.success_pct, 2)}",
        f"bleu             {_fmt(agg.bleu, 2) if agg.bleu is not None else 'N/A'}",
        f"combined         {_fmt(agg.combined, 2) if agg.combined is not None else 'N/A'}",
        f"mean sent-score  {_fmt(agg.mean_sent, 4) if agg.mean_sent is not None else 'N/A'}",
        f"mean sess-score  {_fmt(agg.mean_sess, 4) if agg.mean_sess is not None else 'N/A'}",
    ]
    return "\n".join(lines) + "\n"


def table_from_rows(rows: Sequence[dict]) -> str:
    """Aggregate table recomputed from CSV rows (BLEU is corpus-level and not
    recoverable from per-session records)."""
    if not rows:
        raise PreconditionError("empty report")
    informs = [int(r["inform"]) for r in rows]
    successes = [int(r["success"]) for r in rows]
    sents = [float(r["sent_score"]) for r in rows if r["sent_score"] != NA]
    sesses = [float(r["sess_score"]) for r in rows if r["sess_score"] != NA]
    lines = [
        f"sessions         {len(rows)}",
        f"inform           {100.0 * sum(informs) / len(rows):.2f}",
        f"success          {100.0 * sum(successes) / len(rows):.2f}",
        f"mean turns       {sum(int(r['turns']) for r in rows) / len(rows):.2f}",
        f"mean sent-score  {sum(sents) / len(sents):.4f}" if sents else "mean sent-score  N/A",
        f"mean sess-score  {sum(sesses) / len(sesses):.4f}" if sesses else "mean sess-score  N/A",
    ]
    return "\n".join(lines) + "\n"


def svg_histogram(values: Sequence[float], title: str, bins: int = 10) -> str:
    """Minimal deterministic SVG histogram of a score distribution."""
    width, height, margin = 480, 240, 36
    if not values:
        raise PreconditionError("no values to plot")
    lo, hi = min(values), max(values)
    if hi <= lo:
        hi = lo + 1.0
    counts = [0] * bins
    for v in values:
        idx = min(int((v - lo) / (hi - lo) * bins), bins - 1)
        counts[idx] += 1
    peak = max(counts)
    bar_w = (width - 2 * margin) / bins
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{margin}" y="18" font-size="13" font-family="monospace">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    for i, c in enumerate(counts):
        bar_h = (height - 2 * margin) * (c / peak) if peak else 0
        x = margin + i * bar_w
        y = height - margin - bar_h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 2:.1f}" '
                     f'height="{bar_h:.1f}" fill="steelblue"/>')
    parts.append(f'<text x="{margin}" y="{height - margin + 16}" font-size="11" '
                 f'font-family="monospace">{lo:.3f}</text>')
    parts.append(f'<text x="{width - margin - 40}" y="{height - margin + 16}" '
                 f'font-size="11" font-family="monospace">{hi:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
