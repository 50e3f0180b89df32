"""Per-stream adaptive minimum duplicate-run length.

Each stream keeps two 64-slot histograms: lengths of duplicate write runs and
lengths of sequential read runs.  The threshold blends their means by the
stream's read ratio, so read-heavy streams are protected from fragmentation
while write-heavy streams dedup shorter runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional

SLOTS = 64
INITIAL_THRESHOLD = 16
RESET_FRACTION = 0.5
THRESHOLD_COLUMNS = ["time", "stream", "T", "mean_d", "mean_r", "r"]


def _hist_mean(hist: list[int]) -> Optional[float]:
    total = sum(hist)
    if not total:
        return None
    return sum((i + 1) * c for i, c in enumerate(hist)) / total


@dataclass
class ThresholdState:
    """``write_runs[l-1]`` / ``read_runs[l-1]`` count runs of length ``l`` (64 = 64 or more)."""

    threshold: int = INITIAL_THRESHOLD
    write_runs: list[int] = field(default_factory=lambda: [0] * SLOTS)
    read_runs: list[int] = field(default_factory=lambda: [0] * SLOTS)
    reads: int = 0
    writes: int = 0
    last_update_ratio: Optional[float] = None
    resets: int = 0

    def __post_init__(self):
        if not 1 <= self.threshold <= SLOTS:
            raise ValueError(f"threshold must lie in [1, {SLOTS}]")

    @property
    def read_ratio(self) -> float:
        total = self.reads + self.writes
        return self.reads / total if total else 0.0

    @property
    def mean_dup_run(self) -> Optional[float]:
        return _hist_mean(self.write_runs)

    @property
    def mean_read_run(self) -> Optional[float]:
        return _hist_mean(self.read_runs)

    def count_requests(self, reads: int = 0, writes: int = 0) -> None:
        self.reads += reads
        self.writes += writes


def record_write_run(state: ThresholdState, run_length: int) -> ThresholdState:
    if run_length < 1:
        raise ValueError("run length must be >= 1")
    state.write_runs[min(run_length, SLOTS) - 1] += 1
    return state


def record_read_run(state: ThresholdState, run_length: int) -> ThresholdState:
    if run_length < 1:
        raise ValueError("run length must be >= 1")
    state.read_runs[min(run_length, SLOTS) - 1] += 1
    return state


def blend(read_ratio: float, mean_d: Optional[float], mean_r: Optional[float]) -> Optional[int]:
    """Threshold from the two run means; a missing side takes the other's value."""
    if mean_d is None and mean_r is None:
        return None
    if mean_d is None:
        mean_d = mean_r
    if mean_r is None:
        mean_r = mean_d
    t = (1.0 - read_ratio) * mean_d + read_ratio * mean_r
    # round half up: 2.5 -> 3
    return max(1, min(SLOTS, int(t + 0.5)))


def update_threshold(state: ThresholdState, current_ratio: Optional[float] = None) -> ThresholdState:
    new = blend(state.read_ratio, state.mean_dup_run, state.mean_read_run)
    if new is None:
        return state
    state.threshold = new
    if current_ratio is not None:
        state.last_update_ratio = current_ratio
    return state


def maybe_reset(state: ThresholdState, current_ratio: float, fraction: float = RESET_FRACTION) -> bool:
    """Zero both histograms (and the read-ratio counters) after a sharp ratio drop."""
    last = state.last_update_ratio
    if last is None or not current_ratio < fraction * last:
        return False
    state.write_runs = [0] * SLOTS
    state.read_runs = [0] * SLOTS
    state.reads = state.writes = 0
    state.resets += 1
    return True


def timeline_row(time: int, stream: int, state: ThresholdState) -> dict:
    md, mr = state.mean_dup_run, state.mean_read_run
    return {
        "time": time,
        "stream": stream,
        "T": state.threshold,
        "mean_d": "" if md is None else round(md, 4),
        "mean_r": "" if mr is None else round(mr, 4),
        "r": round(state.read_ratio, 4),
    }


def write_threshold_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=THRESHOLD_COLUMNS)
        w.writeheader()
        w.writerows(rows)
