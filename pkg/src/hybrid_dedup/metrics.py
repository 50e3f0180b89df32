"""Run metrics and report emission (JSON scalars, CSV timelines)."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

from .cache import OCCUPANCY_COLUMNS
from .estimator import ESTIMATE_COLUMNS
from .postprocess import REPORT_COLUMNS
from .threshold import THRESHOLD_COLUMNS
from .trace import FINGERPRINT_BYTES

COUNTER_BYTES = 4
TIMELINE_VERSION = 1
TIMELINE_COLUMNS = ["seq", "writes", "stream", "entries", "hits", "misses", "rejections", "T", "ldss", "predicted"]
COMPARE_COLUMNS = ["mode", "metric", "value"]


def memory_overhead(eif: float, sample_rate: float, cache_entries: int) -> float:
    """Bytes held by the sampling buffer: one fingerprint plus a counter per sample."""
    if eif < 0 or sample_rate < 0 or cache_entries < 0:
        raise ValueError("memory_overhead inputs must be non-negative")
    return eif * cache_entries * sample_rate * (FINGERPRINT_BYTES + COUNTER_BYTES)


@dataclass
class RunMetrics:
    mode: str = ""
    total_writes: int = 0
    total_reads: int = 0
    total_duplicates: int = 0
    distinct_fingerprints: int = 0
    inline_deduped: int = 0
    postprocess_deduped: int = 0
    written_new: int = 0
    materialized_hits: int = 0
    residual_duplicates: int = 0
    cache_entries: int = 0
    cache_hits_total: int = 0
    cache_misses: int = 0
    cache_rejections: int = 0
    fingerprints_admitted: int = 0
    peak_blocks: int = 0
    final_blocks: int = 0
    unmapped_reads: int = 0
    buffer_hits: int = 0
    buffer_misses: int = 0
    estimator_calls: int = 0
    intervals: int = 0
    final_eif: float = 0.0
    sample_rate: float = 0.0
    memory_overhead_bytes: float = 0.0
    exact: bool = True
    per_stream: dict = field(default_factory=dict)
    postprocess: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    occupancy: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)

    TABLES = ("per_stream", "postprocess", "timeline", "estimates", "occupancy", "thresholds")

    def scalars(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in self.TABLES}
        out["inline_dedup_ratio"] = inline_dedup_ratio(self)
        out["average_hits"] = average_hits(self)
        return out


def inline_dedup_ratio(m: RunMetrics) -> float:
    if m.total_duplicates <= 0:
        return 0.0
    return m.inline_deduped / m.total_duplicates


def average_hits(m: RunMetrics) -> float:
    if m.fingerprints_admitted <= 0:
        return 0.0
    return m.cache_hits_total / m.fingerprints_admitted


def _round(v):
    return round(v, 6) if isinstance(v, float) else v


def summary_dict(m: RunMetrics) -> dict:
    data = {k: _round(v) for k, v in m.scalars().items()}
    data["per_stream"] = {str(s): v for s, v in sorted(m.per_stream.items())}
    # wall-clock timings stay in postprocess.csv so the summary is reproducible
    data["postprocess"] = [{k: v for k, v in row.items() if k != "duration_ms"} for row in m.postprocess]
    data["timeline_version"] = TIMELINE_VERSION
    return data


def _write_csv(path, columns: Sequence[str], rows: Iterable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c, "") for c in columns]
            w.writerow(row)


def emit_report(runs: Sequence[RunMetrics] | RunMetrics, out_dir) -> list[str]:
    """Write report files; returns the paths written.

    A single run goes straight into ``out_dir``.  Several runs each get an
    ``out_dir/<mode>`` subdirectory, plus ``out_dir/compare.csv``.
    """
    if isinstance(runs, RunMetrics):
        runs = [runs]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    multi = len(runs) > 1
    for m in runs:
        d = os.path.join(out_dir, m.mode) if multi else out_dir
        os.makedirs(d, exist_ok=True)
        path = os.path.join(d, "summary.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary_dict(m), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
        tables = [
            ("timeline.csv", TIMELINE_COLUMNS, m.timeline),
            ("estimates.csv", ESTIMATE_COLUMNS, m.estimates),
            ("occupancy.csv", OCCUPANCY_COLUMNS, m.occupancy),
            ("thresholds.csv", THRESHOLD_COLUMNS, m.thresholds),
            ("postprocess.csv", REPORT_COLUMNS, m.postprocess),
        ]
        for name, cols, rows in tables:
            p = os.path.join(d, name)
            _write_csv(p, cols, rows)
            written.append(p)
    if multi:
        p = os.path.join(out_dir, "compare.csv")
        rows = []
        for m in runs:
            for k, v in sorted(m.scalars().items()):
                if k == "mode":
                    continue
                rows.append([m.mode, k, _round(v)])
        _write_csv(p, COMPARE_COLUMNS, rows)
        written.append(p)
    return written


def compare_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def load_summary(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def relative_reduction(hybrid_peak: int, reference_peak: int) -> Optional[float]:
    if reference_peak <= 0:
        return None
    return (reference_peak - hybrid_peak) / reference_peak
