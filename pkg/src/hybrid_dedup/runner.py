"""Run configurations, mode wiring and end-of-run verification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .cache import Mode
from .engine import EngineConfig, InlineEngine
from .estimator import DEFAULT_SAMPLE_RATE
from .metrics import RunMetrics, memory_overhead
from .oracle import OracleStats, compute_oracle
from .store import IntegrityError
from .threshold import INITIAL_THRESHOLD
from .trace import StreamType, TraceRecord

BASELINE_THRESHOLD = 4


class RunMode(str, enum.Enum):
    HYBRID = "hybrid"
    IDEDUP_BASELINE = "idedup-baseline"
    POSTPROCESS_ONLY = "postprocess-only"
    DIODE_GATE = "diode-gate"


@dataclass
class RunConfig:
    mode: RunMode = RunMode.HYBRID
    cache_entries: int = 1 << 15
    policy: str = "lru"
    sample_rate: float = DEFAULT_SAMPLE_RATE
    eif: Optional[float] = None
    epsilon: float = 0.05
    threshold: int = INITIAL_THRESHOLD
    fixed_threshold: Optional[int] = None
    pp_interval: int = 0
    seed: int = 0
    check_integrity: bool = True
    event_log: bool = False

    def __post_init__(self):
        self.mode = RunMode(self.mode)

    def engine_config(self, stream_types: Sequence[StreamType] = ()) -> EngineConfig:
        common = dict(
            cache_entries=self.cache_entries,
            policy=self.policy,
            sample_rate=self.sample_rate,
            epsilon=self.epsilon,
            initial_threshold=self.threshold,
            pp_interval=self.pp_interval,
            seed=self.seed,
            stream_types=tuple(stream_types),
            check_integrity=self.check_integrity,
            event_log=self.event_log,
        )
        fixed = self.fixed_threshold or BASELINE_THRESHOLD
        if self.mode is RunMode.HYBRID:
            return EngineConfig(
                cache_mode=Mode.LDSS_PRIORITIZED, estimator=True, eif=self.eif,
                fixed_threshold=self.fixed_threshold, **common,
            )
        if self.mode is RunMode.IDEDUP_BASELINE:
            return EngineConfig(cache_mode=Mode.GLOBAL_BASELINE, estimator=False, eif=self.eif,
                                fixed_threshold=fixed, **common)
        if self.mode is RunMode.DIODE_GATE:
            return EngineConfig(cache_mode=Mode.GLOBAL_BASELINE, estimator=False, eif=self.eif,
                                fixed_threshold=fixed, gated_types=frozenset({StreamType.P}), **common)
        return EngineConfig(cache_mode=Mode.GLOBAL_BASELINE, estimator=False, inline=False, eif=self.eif,
                            fixed_threshold=fixed, **common)


@dataclass
class RunResult:
    config: RunConfig
    metrics: RunMetrics
    engine: InlineEngine = field(repr=False)


def verify_exactness(engine: InlineEngine, oracle: OracleStats) -> list[str]:
    """Post-pass checks: live blocks and read-your-writes against the oracle."""
    problems = []
    if engine.store.live != oracle.live_distinct:
        problems.append(f"live blocks {engine.store.live} != oracle distinct {oracle.live_distinct}")
    bad = 0
    for key, fp in oracle.last_write.items():
        pba = engine.mapping.get(key)
        if pba is None or engine.store.fingerprint_of(pba) != fp:
            bad += 1
            if bad <= 5:
                problems.append(f"{key} does not resolve to its last written fingerprint")
    if bad > 5:
        problems.append(f"{bad} addresses in total resolve wrongly")
    if len(engine.mapping) != len(oracle.last_write):
        problems.append(f"{len(engine.mapping)} mapped addresses, oracle expects {len(oracle.last_write)}")
    return problems


def collect_metrics(engine: InlineEngine, config: RunConfig, oracle: OracleStats) -> RunMetrics:
    st = engine.stats
    cache_stats = engine.cache.stats.values()
    m = RunMetrics(
        mode=config.mode.value,
        total_writes=st.writes,
        total_reads=st.reads,
        total_duplicates=oracle.duplicates,
        distinct_fingerprints=oracle.distinct,
        inline_deduped=st.inline_deduped,
        postprocess_deduped=engine.postprocess_deduped,
        written_new=st.written_new,
        materialized_hits=st.materialized_hits,
        residual_duplicates=st.residual_duplicates,
        cache_entries=config.cache_entries,
        cache_hits_total=sum(s.hits for s in cache_stats),
        cache_misses=sum(s.misses for s in cache_stats),
        cache_rejections=sum(s.rejections for s in cache_stats),
        fingerprints_admitted=sum(s.admitted for s in cache_stats),
        peak_blocks=engine.store.peak,
        final_blocks=engine.store.live,
        unmapped_reads=st.unmapped_reads,
        buffer_hits=st.buffer_hits,
        buffer_misses=st.buffer_misses,
        estimator_calls=st.estimator_calls,
        intervals=st.intervals,
        final_eif=engine.eif,
        sample_rate=config.sample_rate,
        memory_overhead_bytes=memory_overhead(engine.eif, config.sample_rate, config.cache_entries)
        if st.estimator_calls else 0.0,
    )
    for s in sorted(engine.per_stream):
        c = engine.per_stream[s]
        cs = engine.cache.stats.get(s)
        truth = oracle.per_stream.get(s)
        m.per_stream[s] = {
            "writes": c.writes,
            "reads": c.reads,
            "inline_deduped": c.inline_deduped,
            "written_new": c.written_new,
            "materialized": c.materialized,
            "duplicates": truth.duplicates if truth else 0,
            "cache_hits": cs.hits if cs else 0,
            "cache_rejections": cs.rejections if cs else 0,
            "admitted": cs.admitted if cs else 0,
            "threshold": engine.threshold_of(s),
        }
    m.postprocess = [r.row() for r in engine.pp_reports]
    m.timeline = engine.timeline_rows
    m.estimates = [e.csv_row() for e in engine.estimate_rows]
    m.occupancy = engine.occupancy_rows
    m.thresholds = engine.threshold_rows
    return m


def run_records(
    records: Sequence[TraceRecord],
    config: RunConfig,
    stream_types: Sequence[StreamType] = (),
    oracle: Optional[OracleStats] = None,
) -> RunResult:
    """Replay ``records`` under ``config``; raises IntegrityError if the end state is not exact."""
    if oracle is None:
        oracle = compute_oracle(records)
    engine = InlineEngine(config.engine_config(stream_types))
    engine.replay(records)
    metrics = collect_metrics(engine, config, oracle)
    if config.check_integrity:
        problems = verify_exactness(engine, oracle)
        if problems:
            metrics.exact = False
            raise IntegrityError(problems)
    return RunResult(config, metrics, engine)


def run_modes(
    records: Sequence[TraceRecord],
    config: RunConfig,
    modes: Sequence[RunMode],
    stream_types: Sequence[StreamType] = (),
) -> list[RunResult]:
    """Sequential A/B runs sharing one oracle pass."""
    oracle = compute_oracle(records)
    return [run_records(records, replace(config, mode=RunMode(m)), stream_types, oracle) for m in modes]
