"""Offline exact-deduplication pass over the fingerprint multi-table."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .store import BlockStore, LbaMapping, require_integrity

REPORT_COLUMNS = ["merges", "freed", "peak_before", "peak_after", "duration_ms"]


@dataclass
class PostprocessReport:
    """One pass.  ``peak_before``/``peak_after`` are live blocks entering and leaving it."""

    merges: int = 0
    freed: int = 0
    peak_before: int = 0
    peak_after: int = 0
    duration_ms: float = 0.0
    remapped_lbas: int = 0
    # PBA merged away -> canonical PBA now holding its content
    redirect: dict[int, int] = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        return {
            "merges": self.merges,
            "freed": self.freed,
            "peak_before": self.peak_before,
            "peak_after": self.peak_after,
            "duration_ms": round(self.duration_ms, 3),
        }


def collect_garbage(store: BlockStore) -> int:
    return store.collect_garbage()


def peak_capacity(store: BlockStore) -> int:
    return store.peak


def run_postprocess(store: BlockStore, mapping: LbaMapping, check: bool = True) -> PostprocessReport:
    """Merge every multi-PBA fingerprint onto its lowest PBA, then collect garbage.

    Raises :class:`IntegrityError` before touching anything if ``check`` is on
    and the store and mapping disagree.
    """
    t0 = time.perf_counter()
    if check:
        require_integrity(store, mapping)
    report = PostprocessReport(peak_before=store.live)
    for fp, pbas in list(store.duplicate_fingerprints()):
        ordered = sorted(pbas)
        canonical = ordered[0]
        for pba in ordered[1:]:
            report.remapped_lbas += mapping.move_all(pba, canonical)
            report.redirect[pba] = canonical
            report.merges += 1
    report.freed = store.collect_garbage()
    report.peak_after = store.live
    report.duration_ms = (time.perf_counter() - t0) * 1000.0
    return report
