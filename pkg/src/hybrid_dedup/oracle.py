"""Exact, memory-unconstrained ground truth computed from a full trace."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .trace import TraceRecord


@dataclass
class StreamTruth:
    writes: int = 0
    duplicates: int = 0
    distinct: int = 0


@dataclass
class OracleStats:
    writes: int = 0
    reads: int = 0
    distinct: int = 0
    duplicates: int = 0
    per_stream: dict[int, StreamTruth] = field(default_factory=dict)
    last_write: dict[tuple[int, int], bytes] = field(default_factory=dict, repr=False)
    intervals: list[dict] = field(default_factory=list)

    @property
    def live_distinct(self) -> int:
        """Distinct fingerprints still reachable through some (stream, LBA)."""
        return len(set(self.last_write.values()))

    def summary(self) -> dict:
        return {
            "writes": self.writes,
            "reads": self.reads,
            "distinct": self.distinct,
            "duplicates": self.duplicates,
            "live_distinct": self.live_distinct,
            "per_stream": {
                str(s): {"writes": t.writes, "duplicates": t.duplicates, "distinct": t.distinct}
                for s, t in sorted(self.per_stream.items())
            },
            "intervals": self.intervals,
        }


def exact_ldss(fingerprints: Iterable[bytes]) -> int:
    """Writes minus distinct fingerprints within one window of one stream."""
    n = 0
    seen = set()
    for fp in fingerprints:
        n += 1
        seen.add(fp)
    return n - len(seen)


def interval_ldss(records: Iterable[TraceRecord], interval_writes: int) -> list[dict]:
    """Per-(interval, stream) LDSS over fixed windows of ``interval_writes`` writes."""
    if interval_writes < 1:
        raise ValueError("interval length must be >= 1")
    rows = []
    window: dict[int, list[bytes]] = {}
    count = 0
    w = 0

    def close():
        for s in sorted(window):
            fps = window[s]
            distinct = len(set(fps))
            rows.append({"w": w, "stream": s, "N_i": len(fps), "distinct": distinct, "ldss": len(fps) - distinct})

    for rec in records:
        if not rec.is_write:
            continue
        window.setdefault(rec.stream, []).append(rec.fingerprint)
        count += 1
        if count == interval_writes:
            close()
            window, count, w = {}, 0, w + 1
    if window:
        close()
    return rows


def compute_oracle(records: Sequence[TraceRecord] | Iterable[TraceRecord], interval_writes: Optional[int] = None) -> OracleStats:
    records = list(records)
    stats = OracleStats()
    seen: set[bytes] = set()
    per_stream_seen: dict[int, set[bytes]] = {}
    for rec in records:
        truth = stats.per_stream.get(rec.stream)
        if truth is None:
            truth = stats.per_stream[rec.stream] = StreamTruth()
            per_stream_seen[rec.stream] = set()
        if not rec.is_write:
            stats.reads += 1
            continue
        fp = rec.fingerprint
        stats.writes += 1
        truth.writes += 1
        if fp in seen:
            stats.duplicates += 1
            truth.duplicates += 1
        else:
            seen.add(fp)
        per_stream_seen[rec.stream].add(fp)
        stats.last_write[(rec.stream, rec.lba)] = fp
    stats.distinct = len(seen)
    for s, fps in per_stream_seen.items():
        stats.per_stream[s].distinct = len(fps)
    if interval_writes:
        stats.intervals = interval_ldss(records, interval_writes)
    return stats


def write_oracle(stats: OracleStats, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def reuse_distances(fingerprints: Sequence[bytes]) -> Counter:
    """Histogram of distances (in writes) back to each fingerprint's previous occurrence."""
    last: dict[bytes, int] = {}
    hist: Counter = Counter()
    for i, fp in enumerate(fingerprints):
        j = last.get(fp)
        if j is not None:
            hist[i - j] += 1
        last[fp] = i
    return hist
