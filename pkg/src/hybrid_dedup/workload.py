"""Synthetic multi-stream block traces with controllable locality.

Each stream is built from *write units*: a unit is a contiguous LBA extent
written either with fresh fingerprints or as a duplicate run that re-references
an earlier stretch of the stream's own write history.  The distance back into
history is drawn from the profile's reuse-distance distribution, so temporal
locality is shaped by that distribution and spatial locality (duplicate run
length) by the run-length distribution.  Read units re-read earlier extents.

Streams are merged by timestamp.  Pairs of streams may share part of their
fresh-fingerprint space (content overlap), which produces cross-stream
duplicates.
"""

from __future__ import annotations

import bisect
import configparser
import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field, replace
from itertools import accumulate
from typing import Optional, Sequence

import numpy as np

from .trace import Op, StreamType, TraceRecord

NS_PER_SEC = 1_000_000_000
DEFAULT_DURATION_S = 3600.0
MAX_OVERLAP = 0.4


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class Distribution:
    """Positive-integer distribution used for reuse distances and run lengths.

    ``geometric`` has success probability ``param`` on {1, 2, ...};
    ``zipf`` has exponent ``param`` truncated to [1, cap]; ``uniform`` is
    uniform on [1, param]; ``fixed`` always returns ``param``.
    """

    kind: str
    param: float
    cap: int = 1 << 16

    def __post_init__(self):
        k, p = self.kind, self.param
        if k == "geometric":
            ok = 0.0 < p <= 1.0
        elif k == "zipf":
            ok = p > 0.0 and self.cap >= 1
        elif k in ("uniform", "fixed"):
            ok = p >= 1 and float(p).is_integer()
        else:
            raise WorkloadError(f"unknown distribution kind {k!r}")
        if not ok or not math.isfinite(p):
            raise WorkloadError(f"degenerate {k} parameter {p!r}")

    @classmethod
    def parse(cls, text: str) -> "Distribution":
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise WorkloadError(f"bad distribution {text!r}; expected kind:param[:cap]")
        try:
            param = float(parts[1])
            if len(parts) == 3:
                return cls(parts[0], param, int(parts[2]))
        except ValueError:
            raise WorkloadError(f"bad distribution {text!r}") from None
        return cls(parts[0], param)

    def __str__(self) -> str:
        p = int(self.param) if float(self.param).is_integer() else self.param
        if self.kind == "zipf":
            return f"zipf:{p}:{self.cap}"
        return f"{self.kind}:{p}"

    def mean(self) -> float:
        if self.kind == "geometric":
            return 1.0 / self.param
        if self.kind == "uniform":
            return (1.0 + self.param) / 2.0
        if self.kind == "fixed":
            return float(self.param)
        w = self._zipf_weights()
        return float(np.dot(np.arange(1, len(w) + 1), w) / w.sum())

    def _zipf_weights(self) -> np.ndarray:
        return np.arange(1, self.cap + 1, dtype=float) ** -self.param

    def sampler(self, rng: random.Random):
        """Return a zero-argument callable drawing from this distribution."""
        if self.kind == "fixed":
            v = int(self.param)
            return lambda: v
        if self.kind == "uniform":
            hi = int(self.param)
            return lambda: rng.randint(1, hi)
        if self.kind == "geometric":
            if self.param >= 1.0:
                return lambda: 1
            log_q = math.log1p(-self.param)
            return lambda: int(math.log(1.0 - rng.random()) / log_q) + 1
        cum = list(accumulate(self._zipf_weights().tolist()))
        total = cum[-1]
        return lambda: bisect.bisect_left(cum, rng.random() * total) + 1


@dataclass(frozen=True)
class StreamProfile:
    name: str = "custom"
    write_ratio: float = 0.9
    duplicate_ratio: float = 0.5
    reuse: Distribution = Distribution("geometric", 0.01)
    run_length: Distribution = Distribution("geometric", 0.25)
    read_run: Distribution = Distribution("geometric", 0.25)
    request_count: int = 10_000
    rate: float = 100.0
    overwrite_ratio: float = 0.0
    stream_type: StreamType = StreamType.U

    def __post_init__(self):
        for attr in ("write_ratio", "duplicate_ratio", "overwrite_ratio"):
            v = getattr(self, attr)
            if not 0.0 <= v <= 1.0:
                raise WorkloadError(f"{attr} must be in [0, 1], got {v}")
        if self.request_count < 0:
            raise WorkloadError("request_count must be >= 0")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise WorkloadError("rate must be positive")


@dataclass
class MixSpec:
    profiles: list[StreamProfile]
    overlap: Optional[np.ndarray] = None

    def __post_init__(self):
        m = len(self.profiles)
        if m < 1:
            raise WorkloadError("a mix needs at least one stream profile")
        if self.overlap is None:
            self.overlap = np.zeros((m, m))
        self.overlap = np.asarray(self.overlap, dtype=float)
        o = self.overlap
        if o.shape != (m, m):
            raise WorkloadError(f"overlap matrix must be {m}x{m}")
        if not np.allclose(o, o.T) or np.any(np.diag(o) != 0):
            raise WorkloadError("overlap matrix must be symmetric with zero diagonal")
        if np.any(o < 0) or np.any(o > MAX_OVERLAP + 1e-12):
            raise WorkloadError(f"overlap entries must lie in [0, {MAX_OVERLAP}]")

    @property
    def stream_types(self) -> list[StreamType]:
        return [p.stream_type for p in self.profiles]


def _fresh_fp(tag: bytes) -> bytes:
    return hashlib.md5(tag).digest()


def _stream_rngs(seed: int, stream: int) -> tuple[random.Random, random.Random, np.random.Generator]:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stream])
    main, overlap, clock = ss.spawn(3)
    return (
        random.Random(int(main.generate_state(2, np.uint64)[0])),
        random.Random(int(overlap.generate_state(2, np.uint64)[0])),
        np.random.default_rng(clock),
    )


SLIDE_LIMIT = 64


def _latest_near(history: list[bytes], last_pos: dict[bytes, int], pos: int) -> int:
    """Nearest position to ``pos`` holding its fingerprint's latest occurrence.

    Re-referencing an older occurrence would make the realized distance to the
    previous occurrence shorter than the drawn one.
    """
    top = len(history) - 1
    for k in range(SLIDE_LIMIT + 1):
        for q in (pos - k, pos + k):
            if 0 <= q <= top and last_pos[history[q]] == q:
                return q
    return pos


def generate_stream(
    profile: StreamProfile,
    seed: int,
    stream: int = 0,
    overlap_row: Optional[Sequence[float]] = None,
) -> list[TraceRecord]:
    """Generate one stream's records in timestamp order.

    ``overlap_row[j]`` is the fraction of this stream's fresh fingerprints
    drawn from the pool shared with stream ``j``.  Overlap draws use their own
    RNG, so the request structure is the same with or without overlap.
    """
    rng, orng, clock = _stream_rngs(seed, stream)
    n = profile.request_count
    if n == 0:
        return []
    gaps = clock.exponential(NS_PER_SEC / profile.rate, size=n)
    stamps = np.cumsum(gaps).astype(np.int64).tolist()

    reuse = profile.reuse.sampler(rng)
    run_len = profile.run_length.sampler(rng)
    read_len = profile.read_run.sampler(rng)

    w = profile.write_ratio
    ew, er = profile.run_length.mean(), profile.read_run.mean()
    p_write_unit = 1.0 if w >= 1.0 else (w * er) / (w * er + (1.0 - w) * ew)

    partners: list[tuple[int, float]] = []
    if overlap_row is not None:
        partners = [(j, float(o)) for j, o in enumerate(overlap_row) if j != stream and o > 0]
    share_total = sum(o for _, o in partners)
    share_scale = 1.0 / share_total if share_total > 1.0 else 1.0
    pair_counters = {j: 0 for j, _ in partners}
    # each stream walks its shared pools in its own order, so shared content
    # is not written by both partners at the same moment
    expected_fresh = n * profile.write_ratio * (1.0 - profile.duplicate_ratio)
    pair_order: dict[int, list[int]] = {}
    for j, o in partners:
        size = max(1, math.ceil(expected_fresh * o * share_scale))
        order = list(range(size))
        random.Random(f"{seed}:{stream}:{j}").shuffle(order)
        pair_order[j] = order

    prefix = f"{seed}:{stream}:".encode()
    fresh_counter = 0
    history: list[bytes] = []
    last_pos: dict[bytes, int] = {}
    extents: list[tuple[int, int]] = []
    lba_ptr = 0
    dup_written = 0
    out: list[TraceRecord] = []

    def fresh() -> bytes:
        nonlocal fresh_counter
        if partners:
            u = orng.random()
            acc = 0.0
            for j, o in partners:
                acc += o * share_scale
                if u < acc:
                    k = pair_counters[j]
                    pair_counters[j] = k + 1
                    order = pair_order[j]
                    a, b = min(stream, j), max(stream, j)
                    return _fresh_fp(f"pair:{seed}:{a}:{b}:{order[k % len(order)]}".encode())
        fresh_counter += 1
        return _fresh_fp(prefix + str(fresh_counter).encode())

    i = 0
    while i < n:
        if rng.random() < p_write_unit or not extents:
            length = min(run_len(), n - i)
            # nudge toward the target ratio so long runs cannot drift it
            deficit = profile.duplicate_ratio * len(history) - dup_written
            p_dup = min(1.0, max(0.0, profile.duplicate_ratio + deficit / (8.0 * ew)))
            dup = bool(history) and rng.random() < p_dup
            if extents and rng.random() < profile.overwrite_ratio:
                start = extents[rng.randrange(len(extents))][0]
            else:
                start = lba_ptr + rng.randint(1, 16)
                lba_ptr = start + length
            extents.append((start, length))
            back = reuse() if dup else 0
            for t in range(length):
                if not dup:
                    fp = fresh()
                elif back <= len(history):
                    fp = history[_latest_near(history, last_pos, len(history) - back)]
                else:
                    # the distance reaches content written before the trace
                    # window began; it is new to this trace
                    fp = _fresh_fp(prefix + b"pre:" + str(back - len(history)).encode())
                dup_written += fp in last_pos
                last_pos[fp] = len(history)
                history.append(fp)
                out.append(TraceRecord(stamps[i], stream, Op.WRITE, start + t, fp))
                i += 1
        else:
            length = min(read_len(), n - i)
            start = extents[rng.randrange(len(extents))][0]
            for t in range(length):
                out.append(TraceRecord(stamps[i], stream, Op.READ, start + t))
                i += 1
    return out


def mix_streams(spec: MixSpec, seed: int) -> list[TraceRecord]:
    streams = [
        generate_stream(p, seed, i, spec.overlap[i] if np.any(spec.overlap[i]) else None)
        for i, p in enumerate(spec.profiles)
    ]
    if len(streams) == 1:
        return streams[0]
    return list(heapq.merge(*streams, key=lambda r: (r.timestamp, r.stream)))


# -- presets -----------------------------------------------------------------

# Write ratio and duplicate ratio follow the published workload statistics of
# the four template traces; locality shapes are approximations.
TEMPLATES: dict[str, StreamProfile] = {
    "fiu-mail": StreamProfile(
        name="fiu-mail",
        write_ratio=0.9142,
        duplicate_ratio=0.9098,
        reuse=Distribution("geometric", 1 / 3000),
        run_length=Distribution("geometric", 1 / 12),
        read_run=Distribution("geometric", 1 / 8),
    ),
    "fiu-web": StreamProfile(
        name="fiu-web",
        write_ratio=0.7327,
        duplicate_ratio=0.5498,
        reuse=Distribution("geometric", 1 / 1500),
        run_length=Distribution("geometric", 1 / 1.6),
        read_run=Distribution("geometric", 1 / 2),
    ),
    "fiu-home": StreamProfile(
        name="fiu-home",
        write_ratio=0.9044,
        duplicate_ratio=0.3048,
        reuse=Distribution("geometric", 1 / 2000),
        run_length=Distribution("geometric", 1 / 3),
        read_run=Distribution("geometric", 1 / 4),
    ),
    "cloud-ftp": StreamProfile(
        name="cloud-ftp",
        write_ratio=0.8394,
        duplicate_ratio=0.2077,
        reuse=Distribution("uniform", 40_000),
        run_length=Distribution("geometric", 1 / 16),
        read_run=Distribution("geometric", 1 / 16),
        stream_type=StreamType.H,
    ),
    "cloud-ftp-media": StreamProfile(
        name="cloud-ftp-media",
        write_ratio=0.8394,
        duplicate_ratio=0.02,
        reuse=Distribution("uniform", 40_000),
        run_length=Distribution("geometric", 1 / 16),
        read_run=Distribution("geometric", 1 / 16),
        stream_type=StreamType.P,
    ),
}

LOCALITY_TEMPLATES = frozenset({"fiu-mail", "fiu-web", "fiu-home"})

# Per-workload stream makeup, as (template, relative size).  Sizes are in
# units of one mail stream; the non-locality side is sized so the L:NL request
# volume ratio is 3:1, 1:1 and 1:3, with 14.2% of NL volume in media streams.
_WORKLOADS: dict[str, list[tuple[str, float]]] = {
    "workload-A": [("fiu-mail", 1.0)] * 3 + [("fiu-home", 0.25)] * 2 + [("fiu-web", 0.25)],
    "workload-B": [("fiu-mail", 1.0)] * 2 + [("fiu-home", 0.25), ("fiu-web", 0.25)],
    "workload-C": [("fiu-mail", 1.0), ("fiu-home", 0.25), ("fiu-web", 0.25)],
}
_NL_RATIO = {"workload-A": 1 / 3, "workload-B": 1.0, "workload-C": 3.0}
_NL_STREAMS = {"workload-A": 1, "workload-B": 2, "workload-C": 3}
MEDIA_SHARE = 0.142
BASE_STREAM_REQUESTS = 40_000

PRESETS = sorted(set(TEMPLATES) | set(_WORKLOADS))


def workload_layout(name: str) -> list[tuple[str, float]]:
    if name not in _WORKLOADS:
        raise WorkloadError(f"unknown workload preset {name!r}")
    layout = list(_WORKLOADS[name])
    l_size = sum(s for _, s in layout)
    nl_size = l_size * _NL_RATIO[name]
    k = _NL_STREAMS[name]
    ftp_each = nl_size * (1 - MEDIA_SHARE) / k
    layout += [("cloud-ftp", ftp_each)] * k
    layout.append(("cloud-ftp-media", nl_size * MEDIA_SHARE))
    return layout


def preset_mix(
    name: str,
    scale: float = 1.0,
    seed: int = 0,
    duration_s: float = DEFAULT_DURATION_S,
) -> MixSpec:
    """Build a :class:`MixSpec` for a named preset.

    Template names give a single stream.  Streams cloned from the same
    template get a pairwise content overlap drawn uniformly from [0, 0.4].
    """
    if scale <= 0:
        raise WorkloadError("scale must be positive")
    if name in TEMPLATES:
        layout = [(name, 1.0)]
    else:
        layout = workload_layout(name)
    profiles = []
    for template, size in layout:
        count = max(1, int(round(BASE_STREAM_REQUESTS * size * scale)))
        base = TEMPLATES[template]
        extra = {}
        if base.reuse.kind == "uniform":
            # weak locality: re-references spread over a window as long as the stream
            extra["reuse"] = Distribution("uniform", max(1, round(count * base.write_ratio)))
        profiles.append(replace(base, request_count=count, rate=count / duration_s, **extra))
    m = len(profiles)
    overlap = np.zeros((m, m))
    orng = np.random.default_rng([seed & 0xFFFFFFFF, 0x0FE1A9])
    for i in range(m):
        for j in range(i + 1, m):
            if layout[i][0] == layout[j][0]:
                overlap[i, j] = overlap[j, i] = round(float(orng.uniform(0.0, MAX_OVERLAP)), 4)
    return MixSpec(profiles, overlap)


def locality_split(spec: MixSpec) -> tuple[int, int]:
    """Requests in good-locality (L) vs weak-locality (NL) streams."""
    l = sum(p.request_count for p in spec.profiles if p.name in LOCALITY_TEMPLATES)
    nl = sum(p.request_count for p in spec.profiles) - l
    return l, nl


# -- config files --------------------------------------------------------------

_PROFILE_FIELDS = {
    "write_ratio": float,
    "duplicate_ratio": float,
    "request_count": int,
    "rate": float,
    "overwrite_ratio": float,
    "reuse": Distribution.parse,
    "run_length": Distribution.parse,
    "read_run": Distribution.parse,
    "type": StreamType,
}


def load_mix_config(path) -> tuple[MixSpec, Optional[int]]:
    """Read a MixSpec from an INI file.

    ``[mix]`` may hold ``preset``, ``scale`` and ``seed``.  Each
    ``[stream.N]`` section starts from ``template`` (a preset name) and
    overrides individual profile fields.  ``[overlap]`` holds ``i-j = frac``.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise WorkloadError(f"cannot read config {path}")
    mix = cp["mix"] if cp.has_section("mix") else {}
    seed = int(mix["seed"]) if "seed" in mix else None
    if "preset" in mix:
        spec = preset_mix(mix["preset"], float(mix.get("scale", 1.0)), seed or 0)
        return spec, seed

    sections = sorted(
        (s for s in cp.sections() if s.startswith("stream.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if not sections:
        raise WorkloadError("config has no [stream.N] sections")
    profiles = []
    for idx, sec in enumerate(sections):
        if int(sec.split(".", 1)[1]) != idx:
            raise WorkloadError("stream sections must be numbered 0..M-1")
        body = cp[sec]
        template = body.get("template", "")
        if template and template not in TEMPLATES:
            raise WorkloadError(f"unknown template {template!r} in [{sec}]")
        base = TEMPLATES[template] if template else StreamProfile()
        kwargs = {}
        for key, value in body.items():
            if key == "template":
                continue
            if key not in _PROFILE_FIELDS:
                raise WorkloadError(f"unknown key {key!r} in [{sec}]")
            try:
                kwargs["stream_type" if key == "type" else key] = _PROFILE_FIELDS[key](value)
            except ValueError as exc:
                raise WorkloadError(f"[{sec}] {key}: {exc}") from None
        profiles.append(replace(base, **kwargs))
    m = len(profiles)
    overlap = np.zeros((m, m))
    if cp.has_section("overlap"):
        for key, value in cp["overlap"].items():
            try:
                i, j = (int(x) for x in key.split("-"))
                overlap[i, j] = overlap[j, i] = float(value)
            except (ValueError, IndexError):
                raise WorkloadError(f"bad overlap entry {key} = {value}") from None
    return MixSpec(profiles, overlap), seed
