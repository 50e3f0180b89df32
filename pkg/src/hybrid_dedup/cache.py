"""Stream-partitioned fingerprint cache (fingerprint -> physical block address).

Partitions are logical: every stream keeps its own replacement-policy state,
but all streams draw from one shared capacity pool.  In
``Mode.LDSS_PRIORITIZED`` the share each stream ends up with is steered by
two mechanisms:

* admission: a stream whose predicted local duplicate count is tiny compared
  to the best stream does not get its fingerprints cached at all;
* eviction: the stream that gives up an entry is drawn at random with
  probability proportional to ``1 / ldss``.
"""

from __future__ import annotations

import bisect
import csv
import enum
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .policies import make_policy

ENTRY_BYTES = 64
DEFAULT_EPSILON = 0.05
OCCUPANCY_COLUMNS = ["seq", "stream", "entries", "hits", "misses", "rejections"]


class CacheError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    GLOBAL_BASELINE = "global"
    LDSS_PRIORITIZED = "ldss"


def entries_for_bytes(nbytes: float) -> int:
    return max(1, int(nbytes // ENTRY_BYTES))


@dataclass
class CacheConfig:
    capacity: int
    policy: str = "lru"
    admission_epsilon: float = DEFAULT_EPSILON
    mode: Mode = Mode.LDSS_PRIORITIZED

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("cache capacity must be >= 1 entry")
        if not 0.0 <= self.admission_epsilon < 1.0:
            raise ValueError("admission_epsilon must lie in [0, 1)")
        self.policy = self.policy.lower()
        self.mode = Mode(self.mode)


@dataclass(slots=True)
class CacheEntry:
    fingerprint: bytes
    pba: int
    owner: int


@dataclass
class StreamCacheStats:
    hits: int = 0
    misses: int = 0
    rejections: int = 0
    admitted: int = 0
    evicted: int = 0


class EvictionWeights:
    """Per-stream eviction priorities ``1/ldss`` laid out as adjacent segments."""

    def __init__(self, ldss: Mapping[int, float]):
        if not ldss:
            raise ValueError("eviction weights need at least one stream")
        self.streams = sorted(ldss)
        self.ldss = {s: float(ldss[s]) for s in self.streams}
        self.priorities = []
        for s in self.streams:
            v = self.ldss[s]
            if not v > 0:
                raise ValueError(f"stream {s}: LDSS must be positive, got {v}")
            self.priorities.append(1.0 / v)
        self.bounds = []
        acc = 0.0
        for p in self.priorities:
            acc += p
            self.bounds.append(acc)
        self.total = acc
        self._index = {s: i for i, s in enumerate(self.streams)}

    def segment(self, stream: int) -> tuple[float, float]:
        i = self._index[stream]
        lo = self.bounds[i - 1] if i else 0.0
        return lo, self.bounds[i]

    def segments(self) -> list[tuple[int, float, float]]:
        return [(s, *self.segment(s)) for s in self.streams]

    def index_of(self, r: float) -> int:
        """Index of the segment containing ``r`` in [0, total)."""
        i = bisect.bisect_right(self.bounds, r)
        return min(i, len(self.streams) - 1)

    def pick(self, r: float) -> int:
        return self.streams[self.index_of(r)]

    def max_ldss(self) -> float:
        return max(self.ldss.values())

    def share(self, stream: int) -> float:
        lo, hi = self.segment(stream)
        return (hi - lo) / self.total


def rebuild_weights(estimates: Iterable, floor: float = 1.0) -> EvictionWeights:
    """Weights from estimates carrying ``stream`` and ``predicted``/``ldss``."""
    ldss = {}
    for est in estimates:
        value = est.predicted if getattr(est, "predicted", None) is not None else est.ldss
        if value <= 0:
            raise ValueError(f"stream {est.stream}: non-positive LDSS {value}")
        ldss[est.stream] = max(value, floor)
    return EvictionWeights(ldss)


class FingerprintCache:
    def __init__(self, config: CacheConfig, rng: Optional[random.Random] = None, ldss_floor: float = 1.0):
        self.config = config
        self.capacity = config.capacity
        self.rng = rng if rng is not None else random.Random(0)
        self.ldss_floor = ldss_floor
        self._entries: dict[bytes, CacheEntry] = {}
        self._parts: dict[int, object] = {}
        self._global = make_policy(config.policy, config.capacity)
        self.stats: dict[int, StreamCacheStats] = {}
        self._ldss: dict[int, float] = {}
        self._weights: Optional[EvictionWeights] = None
        self.eviction_draws = 0
        self.snapshot_seq = 0

    @property
    def mode(self) -> Mode:
        return self.config.mode

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fp) -> bool:
        return fp in self._entries

    def get(self, fp) -> Optional[CacheEntry]:
        return self._entries.get(fp)

    def _stats(self, stream: int) -> StreamCacheStats:
        st = self.stats.get(stream)
        if st is None:
            st = self.stats[stream] = StreamCacheStats()
        return st

    def _policy_for(self, owner: int):
        if self.config.mode is Mode.GLOBAL_BASELINE:
            return self._global
        part = self._parts.get(owner)
        if part is None:
            part = self._parts[owner] = make_policy(self.config.policy, self.capacity)
            self._weights = None
        return part

    # -- weights -------------------------------------------------------

    def set_ldss(self, ldss: Mapping[int, float]) -> None:
        for s, v in ldss.items():
            if not v > 0:
                raise ValueError(f"stream {s}: non-positive LDSS {v}")
        self._ldss = {s: max(float(v), self.ldss_floor) for s, v in ldss.items()}
        self._weights = None

    def set_weights(self, weights: EvictionWeights) -> None:
        self.set_ldss(weights.ldss)

    @property
    def weights(self) -> EvictionWeights:
        """Weights over every stream that has an estimate or a partition."""
        if self._weights is None:
            ldss = {s: self.ldss_floor for s in self._parts}
            ldss.update(self._ldss)
            if not ldss:
                ldss = {0: self.ldss_floor}
            self._weights = EvictionWeights(ldss)
        return self._weights

    def ldss_of(self, stream: int) -> float:
        return self._ldss.get(stream, self.ldss_floor)

    # -- operations ----------------------------------------------------

    def lookup(self, fp: bytes, stream: int = 0) -> Optional[int]:
        """PBA for ``fp`` or None; the hit or miss is charged to ``stream``."""
        entry = self._entries.get(fp)
        st = self._stats(stream)
        if entry is None:
            st.misses += 1
            return None
        st.hits += 1
        self._policy_for(entry.owner).touch(fp)
        return entry.pba

    def should_admit(self, owner: int) -> bool:
        if self.config.mode is Mode.GLOBAL_BASELINE:
            return True
        eps = self.config.admission_epsilon
        if eps <= 0:
            return True
        best = max([*self._ldss.values(), self.ldss_floor])
        return self.ldss_of(owner) >= eps * best

    def admit(self, fp: bytes, pba: int, owner: int) -> bool:
        if fp in self._entries:
            raise CacheError("fingerprint already resident")
        if not self.should_admit(owner):
            self._stats(owner).rejections += 1
            return False
        policy = self._policy_for(owner)
        if len(self._entries) >= self.capacity:
            self.evict_one(incoming=fp, incoming_owner=owner)
        policy.insert(fp)
        self._entries[fp] = CacheEntry(fp, pba, owner)
        self._stats(owner).admitted += 1
        return True

    def choose_victim_stream(self) -> int:
        w = self.weights
        self.eviction_draws += 1
        i = w.index_of(self.rng.random() * w.total)
        n = len(w.streams)
        for step in range(n):
            s = w.streams[(i + step) % n]
            part = self._parts.get(s)
            if part is not None and len(part):
                return s
        raise CacheError("eviction requested but every stream partition is empty")

    def evict_one(self, incoming: Optional[bytes] = None, incoming_owner: Optional[int] = None) -> CacheEntry:
        if not self._entries:
            raise CacheError("eviction requested on an empty cache")
        if self.config.mode is Mode.GLOBAL_BASELINE:
            fp = self._global.victim(incoming)
        else:
            stream = self.choose_victim_stream()
            hint = incoming if stream == incoming_owner else None
            fp = self._parts[stream].victim(hint)
        entry = self._entries.pop(fp)
        self._stats(entry.owner).evicted += 1
        return entry

    def remove(self, fp: bytes) -> Optional[CacheEntry]:
        entry = self._entries.pop(fp, None)
        if entry is not None:
            self._policy_for(entry.owner).remove(fp)
        return entry

    def remap(self, fp: bytes, pba: int) -> None:
        self._entries[fp].pba = pba

    def entries(self) -> list[CacheEntry]:
        return list(self._entries.values())

    # -- reporting -----------------------------------------------------

    def occupancy(self) -> dict[int, int]:
        occ: dict[int, int] = {}
        for e in self._entries.values():
            occ[e.owner] = occ.get(e.owner, 0) + 1
        return occ

    def total_hits(self) -> int:
        return sum(s.hits for s in self.stats.values())

    def snapshot_rows(self, streams: Optional[Iterable[int]] = None) -> list[dict]:
        occ = self.occupancy()
        seq = self.snapshot_seq
        self.snapshot_seq += 1
        keys = sorted(set(streams or ()) | set(self.stats) | set(occ))
        rows = []
        for s in keys:
            st = self.stats.get(s, StreamCacheStats())
            rows.append({"seq": seq, "stream": s, "entries": occ.get(s, 0), "hits": st.hits,
                         "misses": st.misses, "rejections": st.rejections})
        return rows


def write_occupancy_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=OCCUPANCY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
