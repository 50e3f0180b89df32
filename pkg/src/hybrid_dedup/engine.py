"""Inline deduplication write/read path with optional locality estimation.

The engine replays trace records in order.  A write whose fingerprint hits
the fingerprint cache is held in the stream's pending run; the run is
deduplicated as a whole only if it reaches the stream's threshold, otherwise
its blocks are written out like misses.  Post-processing passes run between
records and leave the cache pointing at surviving blocks.
"""

from __future__ import annotations

import enum
import random
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .cache import CacheConfig, FingerprintCache, Mode
from .estimator import (
    DEFAULT_SAMPLE_RATE,
    LDSS_FLOOR,
    LdssEstimate,
    ReservoirSample,
    SmootherState,
    Trigger,
    check_triggers,
    estimate_all,
    predict_next,
)
from .postprocess import PostprocessReport, run_postprocess
from .store import BlockStore, LbaMapping, require_integrity
from .threshold import (
    INITIAL_THRESHOLD,
    ThresholdState,
    maybe_reset,
    record_read_run,
    record_write_run,
    timeline_row,
    update_threshold,
)
from .trace import StreamType, TraceRecord

MAX_RUN = 64
DEFAULT_EIF = 0.5
EIF_BOUNDS = (0.1, 0.9)
DEFAULT_BUFFER_BLOCKS = 1 << 16


class WriteOutcome(str, enum.Enum):
    INLINE_DEDUPED = "deduped"
    WRITTEN_NEW = "new"
    BUFFERED = "buffered"


class RunOutcome(str, enum.Enum):
    DEDUPED = "run_deduped"
    MATERIALIZED = "run_materialized"


class ReadOutcome(str, enum.Enum):
    MAPPED = "mapped"
    UNMAPPED = "unmapped"


@dataclass
class EngineConfig:
    cache_entries: int
    policy: str = "lru"
    cache_mode: Mode = Mode.LDSS_PRIORITIZED
    estimator: bool = True
    inline: bool = True
    sample_rate: float = DEFAULT_SAMPLE_RATE
    eif: Optional[float] = None  # None: start at 0.5 and follow 1 - d
    epsilon: float = 0.05
    initial_threshold: int = INITIAL_THRESHOLD
    fixed_threshold: Optional[int] = None
    gated_types: frozenset = frozenset()
    stream_types: tuple = ()
    pp_interval: int = 0
    seed: int = 0
    buffer_blocks: int = DEFAULT_BUFFER_BLOCKS
    event_log: bool = False
    check_integrity: bool = True

    def __post_init__(self):
        if self.cache_entries < 1:
            raise ValueError("cache_entries must be >= 1")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must lie in (0, 1]")
        if self.eif is not None and not 0.0 < self.eif <= 1.0:
            raise ValueError("eif must lie in (0, 1]")
        if self.fixed_threshold is not None and not 1 <= self.fixed_threshold <= MAX_RUN:
            raise ValueError(f"fixed threshold must lie in [1, {MAX_RUN}]")
        if not 1 <= self.initial_threshold <= MAX_RUN:
            raise ValueError(f"initial threshold must lie in [1, {MAX_RUN}]")
        if self.pp_interval < 0:
            raise ValueError("pp_interval must be >= 0")
        self.cache_mode = Mode(self.cache_mode)


@dataclass
class StreamCounters:
    writes: int = 0
    reads: int = 0
    written_new: int = 0
    inline_deduped: int = 0
    materialized: int = 0
    residual: int = 0
    unmapped_reads: int = 0


@dataclass
class EngineStats:
    writes: int = 0
    reads: int = 0
    written_new: int = 0
    inline_deduped: int = 0
    rewrites_skipped: int = 0
    materialized_hits: int = 0
    residual_duplicates: int = 0
    runs_deduped: int = 0
    runs_materialized: int = 0
    unmapped_reads: int = 0
    stale_cache_hits: int = 0
    gated_writes: int = 0
    estimator_calls: int = 0
    intervals: int = 0
    buffer_hits: int = 0
    buffer_misses: int = 0
    triggers: Counter = field(default_factory=Counter)


class DataBuffer:
    """Fingerprint-keyed LRU block buffer; statistics only."""

    def __init__(self, capacity: int):
        self.capacity = max(1, capacity)
        self._lru: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._lru)

    def access(self, fp: bytes) -> bool:
        if fp in self._lru:
            self._lru.move_to_end(fp)
            self.hits += 1
            return True
        self.misses += 1
        self._lru[fp] = None
        if len(self._lru) > self.capacity:
            self._lru.popitem(last=False)
        return False


class PendingRun:
    __slots__ = ("lbas", "fps", "pbas")

    def __init__(self):
        self.lbas: list[int] = []
        self.fps: list[bytes] = []
        self.pbas: list[int] = []

    def __len__(self) -> int:
        return len(self.lbas)

    @property
    def next_lba(self) -> int:
        return self.lbas[-1] + 1

    def append(self, lba: int, fp: bytes, pba: int) -> None:
        self.lbas.append(lba)
        self.fps.append(fp)
        self.pbas.append(pba)


class InlineEngine:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.store = BlockStore()
        self.mapping = LbaMapping(self.store)
        self.cache = FingerprintCache(
            CacheConfig(config.cache_entries, config.policy, config.epsilon, config.cache_mode),
            rng=random.Random(f"{config.seed}:evict"),
            ldss_floor=LDSS_FLOOR,
        )
        self.stats = EngineStats()
        self.per_stream: dict[int, StreamCounters] = {}
        self.thresholds: dict[int, ThresholdState] = {}
        self.pending: dict[int, PendingRun] = {}
        self._read_run: dict[int, tuple[int, int]] = {}
        self.buffer = DataBuffer(config.buffer_blocks)
        self.events: Optional[list] = [] if config.event_log else None
        self.stream_types = tuple(StreamType(t) for t in config.stream_types)

        self.eif = config.eif if config.eif is not None else DEFAULT_EIF
        self.interval_index = 0
        self.interval_length = self._interval_length()
        self.reservoir = ReservoirSample(self._reservoir_capacity(), random.Random(f"{config.seed}:reservoir"))
        self._interval_writes: Counter = Counter()
        self._interval_inline: Counter = Counter()
        self._interval_residual: Counter = Counter()
        self._known_streams: set[int] = set()
        self._estimated_once = False
        self._stream_joined = False
        self._window = [0, 0, 0]  # writes, inline, residual
        self._prev_window_ratio: Optional[float] = None
        self.smoothers: dict[int, SmootherState] = {}
        self.last_estimates: dict[int, LdssEstimate] = {}

        self.estimate_rows: list[LdssEstimate] = []
        self.occupancy_rows: list[dict] = []
        self.threshold_rows: list[dict] = []
        self.timeline_rows: list[dict] = []
        self.pp_reports: list[PostprocessReport] = []
        self._writes_since_pass = 0

    # -- configuration helpers ------------------------------------------

    def _interval_length(self) -> int:
        return max(1, int(round(self.eif * self.config.cache_entries)))

    def _reservoir_capacity(self) -> int:
        return max(1, int(round(self.config.sample_rate * self.interval_length)))

    def _counters(self, stream: int) -> StreamCounters:
        c = self.per_stream.get(stream)
        if c is None:
            c = self.per_stream[stream] = StreamCounters()
        return c

    def threshold_state(self, stream: int) -> ThresholdState:
        st = self.thresholds.get(stream)
        if st is None:
            t0 = self.config.fixed_threshold or self.config.initial_threshold
            st = self.thresholds[stream] = ThresholdState(threshold=t0)
        return st

    def threshold_of(self, stream: int) -> int:
        if self.config.fixed_threshold is not None:
            return self.config.fixed_threshold
        return self.threshold_state(stream).threshold

    def inline_enabled(self, stream: int) -> bool:
        if not self.config.inline:
            return False
        if self.config.gated_types and stream < len(self.stream_types):
            return self.stream_types[stream] not in self.config.gated_types
        return True

    def _log(self, *event) -> None:
        if self.events is not None:
            self.events.append(event)

    # -- write path --------------------------------------------------------

    def handle_write(self, rec: TraceRecord) -> WriteOutcome:
        s, lba, fp = rec.stream, rec.lba, rec.fingerprint
        self._note_stream(s)
        stats = self.stats
        stats.writes += 1
        sc = self._counters(s)
        sc.writes += 1
        self.threshold_state(s).writes += 1
        self._close_read_run(s)
        self._interval_writes[s] += 1
        self._window[0] += 1
        if self.config.estimator:
            self.reservoir.offer((s, fp))
        if self.buffer.access(fp):
            stats.buffer_hits += 1
        else:
            stats.buffer_misses += 1

        outcome = self._write(s, lba, fp)
        self._after_write()
        return outcome

    def _write(self, s: int, lba: int, fp: bytes) -> WriteOutcome:
        run = self.pending.get(s)
        if run is not None and lba != run.next_lba:
            self.flush_run(s)
        key = (s, lba)
        current = self.mapping.get(key)
        if current is not None and self.store.fingerprint_of(current) == fp:
            # same content already at this address: nothing to store
            self.flush_run(s)
            self.stats.rewrites_skipped += 1
            self._count_inline(s, 1)
            self._log("skip", s, lba, current)
            return WriteOutcome.INLINE_DEDUPED
        if self.inline_enabled(s):
            pba = self.cache.lookup(fp, s)
            if pba is not None and self.store.fingerprint_of(pba) != fp:
                self.stats.stale_cache_hits += 1
                self.cache.remove(fp)
                pba = None
            if pba is not None:
                run = self.pending.get(s)
                if run is None:
                    run = self.pending[s] = PendingRun()
                run.append(lba, fp, pba)
                self._log("buf", s, lba, pba)
                if len(run) >= MAX_RUN:
                    self.flush_run(s)
                return WriteOutcome.BUFFERED
        else:
            self.stats.gated_writes += 1
        self.flush_run(s)
        pba = self._store_block(s, lba, fp)
        self.stats.written_new += 1
        self._counters(s).written_new += 1
        if self.inline_enabled(s):
            self.cache.admit(fp, pba, s)
        self._log("new", s, lba, pba)
        return WriteOutcome.WRITTEN_NEW

    def _store_block(self, s: int, lba: int, fp: bytes) -> int:
        if self.store.has_fingerprint(fp):
            self.stats.residual_duplicates += 1
            self._counters(s).residual += 1
            self._interval_residual[s] += 1
            self._window[2] += 1
        pba = self.store.allocate(fp)
        self.mapping.map((s, lba), pba)
        return pba

    def _count_inline(self, s: int, n: int) -> None:
        self.stats.inline_deduped += n
        self._counters(s).inline_deduped += n
        self._interval_inline[s] += n
        self._window[1] += n

    def flush_run(self, stream: int) -> Optional[RunOutcome]:
        run = self.pending.pop(stream, None)
        if run is None:
            return None
        n = len(run)
        record_write_run(self.threshold_state(stream), n)
        if n >= self.threshold_of(stream):
            for lba, pba in zip(run.lbas, run.pbas):
                self.mapping.map((stream, lba), pba)
            self._count_inline(stream, n)
            self.stats.runs_deduped += 1
            self._log("dedup", stream, run.lbas[0], tuple(run.pbas))
            return RunOutcome.DEDUPED
        new = []
        for lba, fp in zip(run.lbas, run.fps):
            new.append(self._store_block(stream, lba, fp))
        self.stats.materialized_hits += n
        self._counters(stream).materialized += n
        self.stats.runs_materialized += 1
        self._log("mat", stream, run.lbas[0], tuple(new))
        return RunOutcome.MATERIALIZED

    def flush_all(self) -> None:
        for s in sorted(self.pending):
            self.flush_run(s)

    # -- read path ---------------------------------------------------------

    def handle_read(self, rec: TraceRecord) -> tuple[ReadOutcome, Optional[int]]:
        s, lba = rec.stream, rec.lba
        self._note_stream(s)
        self.stats.reads += 1
        sc = self._counters(s)
        sc.reads += 1
        self.threshold_state(s).reads += 1
        run = self.pending.get(s)
        if run is not None and lba != run.next_lba:
            self.flush_run(s)
        prev = self._read_run.get(s)
        if prev is not None and lba == prev[0] + 1:
            self._read_run[s] = (lba, prev[1] + 1)
        else:
            if prev is not None:
                record_read_run(self.threshold_state(s), prev[1])
            self._read_run[s] = (lba, 1)
        pba = self.mapping.get((s, lba))
        if pba is None:
            self.stats.unmapped_reads += 1
            sc.unmapped_reads += 1
            self._log("read", s, lba, None)
            return ReadOutcome.UNMAPPED, None
        if self.buffer.access(self.store.fingerprint_of(pba)):
            self.stats.buffer_hits += 1
        else:
            self.stats.buffer_misses += 1
        self._log("read", s, lba, pba)
        return ReadOutcome.MAPPED, pba

    def _close_read_run(self, s: int) -> None:
        prev = self._read_run.pop(s, None)
        if prev is not None:
            record_read_run(self.threshold_state(s), prev[1])

    def handle(self, rec: TraceRecord):
        if rec.is_write:
            return self.handle_write(rec)
        return self.handle_read(rec)

    # -- interval clock ----------------------------------------------------

    def _note_stream(self, s: int) -> None:
        if s not in self._known_streams:
            self._known_streams.add(s)
            if self._estimated_once:
                self._stream_joined = True

    def _window_ratio(self) -> Optional[float]:
        _, inline, residual = self._window
        dups = inline + residual
        return inline / dups if dups else None

    def _after_write(self) -> None:
        n = self.interval_length
        written = sum(self._interval_writes.values())
        prev_ratio = cur_ratio = None
        window_len = max(1, n // 4)
        if self._window[0] >= window_len:
            cur_ratio = self._window_ratio()
            prev_ratio = self._prev_window_ratio
            self._prev_window_ratio = cur_ratio
            self._window = [0, 0, 0]
        fired = check_triggers(written, n, prev_ratio, cur_ratio, self._stream_joined)
        if fired:
            self.end_of_interval_hook(fired)
        if self.config.pp_interval:
            self._writes_since_pass += 1
            if self._writes_since_pass >= self.config.pp_interval:
                self.postprocess()

    def historical_ratio(self) -> Optional[float]:
        dups = self.stats.inline_deduped + self.stats.residual_duplicates
        return self.stats.inline_deduped / dups if dups else None

    def end_of_interval_hook(self, triggers: Iterable[Trigger] = (Trigger.INTERVAL_END,)) -> list[LdssEstimate]:
        triggers = set(triggers)
        for t in triggers:
            self.stats.triggers[t.value] += 1
        w = self.interval_index
        estimates: list[LdssEstimate] = []
        if self.config.estimator:
            self.flush_all()
            estimates = self._estimate(w)
            if self.config.eif is None:
                d = self.historical_ratio()
                if d is not None:
                    lo, hi = EIF_BOUNDS
                    self.eif = min(hi, max(lo, 1.0 - d))
        self._update_thresholds(w)
        self._snapshot(w)
        self.stats.intervals += 1
        self.interval_index += 1
        self.interval_length = self._interval_length()
        self.reservoir.reset(self._reservoir_capacity())
        self._interval_writes.clear()
        self._interval_inline.clear()
        self._interval_residual.clear()
        self._stream_joined = False
        if Trigger.DEDUP_RATIO_DROP in triggers:
            self._prev_window_ratio = None
        return estimates

    def _estimate(self, w: int) -> list[LdssEstimate]:
        self.stats.estimator_calls += 1
        samples = self.reservoir.by_stream()
        writes = dict(self._interval_writes)
        ests = estimate_all(samples, writes, self.reservoir.sample_rate, interval=w)
        for est in ests:
            sm = self.smoothers.setdefault(est.stream, SmootherState())
            _, forecast = predict_next(sm, est.ldss)
            est.predicted = max(forecast, LDSS_FLOOR)
            self.last_estimates[est.stream] = est
        if ests:
            self.cache.set_ldss({e.stream: e.predicted for e in ests})
        self._estimated_once = True
        self.estimate_rows.extend(ests)
        return ests

    def _update_thresholds(self, w: int) -> None:
        for s in sorted(self.thresholds):
            st = self.thresholds[s]
            if self.config.fixed_threshold is None:
                dups = self._interval_inline[s] + self._interval_residual[s]
                ratio = self._interval_inline[s] / dups if dups else None
                if ratio is not None:
                    maybe_reset(st, ratio)
                update_threshold(st, ratio)
            self.threshold_rows.append(timeline_row(self.stats.writes, s, st))

    def _snapshot(self, w: int) -> None:
        rows = self.cache.snapshot_rows(self._known_streams)
        self.occupancy_rows.extend(rows)
        for row in rows:
            s = row["stream"]
            est = self.last_estimates.get(s)
            self.timeline_rows.append({
                "seq": row["seq"],
                "writes": self.stats.writes,
                "stream": s,
                "entries": row["entries"],
                "hits": row["hits"],
                "misses": row["misses"],
                "rejections": row["rejections"],
                "T": self.threshold_of(s),
                "ldss": "" if est is None or est.interval != w else round(est.ldss, 3),
                "predicted": "" if est is None or est.interval != w else round(est.predicted, 3),
            })

    # -- post-processing ---------------------------------------------------

    def postprocess(self) -> PostprocessReport:
        self.flush_all()
        report = run_postprocess(self.store, self.mapping, check=self.config.check_integrity)
        self._repair_cache(report)
        self.pp_reports.append(report)
        self._writes_since_pass = 0
        return report

    def _repair_cache(self, report: PostprocessReport) -> None:
        for entry in self.cache.entries():
            target = report.redirect.get(entry.pba)
            if target is not None:
                self.cache.remap(entry.fingerprint, target)
            elif self.store.fingerprint_of(entry.pba) != entry.fingerprint:
                pbas = self.store.pbas_for(entry.fingerprint)
                if pbas:
                    self.cache.remap(entry.fingerprint, min(pbas))
                else:
                    self.cache.remove(entry.fingerprint)

    # -- driver ------------------------------------------------------------

    def replay(self, records: Iterable[TraceRecord], final_pass: bool = True) -> "InlineEngine":
        for rec in records:
            if rec.is_write:
                self.handle_write(rec)
            else:
                self.handle_read(rec)
        self.finish(final_pass)
        return self

    def finish(self, final_pass: bool = True) -> None:
        self.flush_all()
        for s in sorted(self._read_run):
            self._close_read_run(s)
        if final_pass:
            self.postprocess()
        if self.config.check_integrity:
            require_integrity(self.store, self.mapping)

    @property
    def postprocess_deduped(self) -> int:
        return sum(r.merges for r in self.pp_reports)
