"""Per-stream temporal-locality estimation.

Fingerprint occurrences are reservoir-sampled over an estimation interval.
At the end of the interval each stream's sample is folded into a frequency
histogram, and the number of distinct fingerprints the stream wrote during
the interval is recovered with an unseen-style linear program over binomial
thinning.  The local duplicate set size (LDSS) is the stream's write count
minus that distinct count.  A self-tuning Holt smoother forecasts the next
interval's LDSS from the history of estimates.
"""

from __future__ import annotations

import enum
import math
import random
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.stats import binom

DEFAULT_SAMPLE_RATE = 0.15
GRID_CAP = 64
LDSS_FLOOR = 1.0
MIN_STREAM_WRITES = 100
LP_TOL = 1e-6
# fit-objective slack defining the near-optimal set of histograms
SUPPORT_SLACK = 0.5


class EstimationError(RuntimeError):
    """The unseen LP could not be solved."""


class ReservoirSample:
    """Uniform sample of ``capacity`` occurrences from a stream of keys.

    Keys are typically ``(stream, fingerprint)``.  Every offered occurrence
    is retained with probability ``capacity / seen``; the sample is exposed as
    (key, occurrence count) pairs.
    """

    def __init__(self, capacity: int, rng: Optional[random.Random] = None):
        if capacity < 1:
            raise ValueError("reservoir capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng or random.Random(0)
        self.seen = 0
        self._slots: list[Hashable] = []
        self._counts: dict[Hashable, int] = {}

    def offer(self, key: Hashable) -> None:
        self.seen += 1
        counts = self._counts
        if self.seen <= self.capacity:
            self._slots.append(key)
            counts[key] = counts.get(key, 0) + 1
            return
        j = self.rng.randrange(self.seen)
        if j >= self.capacity:
            return
        old = self._slots[j]
        self._slots[j] = key
        c = counts[old] - 1
        if c:
            counts[old] = c
        else:
            del counts[old]
        counts[key] = counts.get(key, 0) + 1

    @property
    def sample_rate(self) -> float:
        """Probability that any given offered occurrence is in the sample."""
        if self.seen == 0:
            return 1.0
        return min(1.0, self.capacity / self.seen)

    def entries(self) -> dict[Hashable, int]:
        return dict(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, key) -> bool:
        return key in self._counts

    def by_stream(self) -> dict[int, list[int]]:
        """Occurrence counts grouped by the stream half of ``(stream, fp)`` keys."""
        out: dict[int, list[int]] = {}
        for (stream, _fp), c in self._counts.items():
            out.setdefault(stream, []).append(c)
        return out

    def reset(self, capacity: Optional[int] = None) -> None:
        if capacity is not None:
            if capacity < 1:
                raise ValueError("reservoir capacity must be >= 1")
            self.capacity = capacity
        self.seen = 0
        self._slots = []
        self._counts = {}


class FrequencyHistogram(Counter):
    """``f[j]`` = number of distinct fingerprints seen exactly ``j`` times."""

    @property
    def distinct(self) -> int:
        return sum(self.values())

    @property
    def mass(self) -> int:
        return sum(j * f for j, f in self.items())


def build_ffh(sample) -> FrequencyHistogram:
    """Histogram of occurrence counts.

    Accepts a :class:`ReservoirSample`, a mapping of key to count, or an
    iterable of counts.
    """
    if isinstance(sample, ReservoirSample):
        counts: Iterable[int] = sample._counts.values()
    elif isinstance(sample, Mapping):
        counts = sample.values()
    else:
        counts = sample
    return FrequencyHistogram(counts)


@dataclass
class LdssEstimate:
    stream: int
    interval: int
    writes: int
    ldss: float
    unique: float
    predicted: Optional[float] = None
    lp_ms: float = 0.0
    bypassed: bool = False
    error: Optional[str] = None

    def csv_row(self) -> list:
        pred = "" if self.predicted is None else f"{self.predicted:.3f}"
        return [self.interval, self.stream, self.writes, f"{self.unique:.3f}", f"{self.ldss:.3f}", pred, f"{self.lp_ms:.3f}"]


ESTIMATE_COLUMNS = ["w", "stream", "N_i", "u", "ldss", "predicted", "lp_ms"]


def lp_support(p: float, grid_cap: int = GRID_CAP) -> tuple[int, int]:
    """(highest sample multiplicity handled by the LP, population grid size).

    Sample multiplicities above the first value are taken at face value: the
    fingerprint is certainly distinct and its interval count is ``j / p``.
    The grid is sized so LP fingerprints' likely population counts fit.
    """
    j_hi = max(1, int(math.floor(p * grid_cap / 2)))
    grid = max(j_hi + 1, min(grid_cap, int(math.ceil(2 * j_hi / p))))
    return j_hi, grid


def thinning_matrix(p: float, rows: int, grid: int) -> np.ndarray:
    """``T[j-1, c-1]`` = P(a fingerprint occurring ``c`` times is sampled ``j`` times).

    An extra last row holds the probability of being sampled more than
    ``rows`` times.
    """
    c = np.arange(1, grid + 1)
    j = np.arange(1, rows + 1)[:, None]
    t = binom.pmf(j, c[None, :], p)
    tail = binom.sf(rows, c, p)
    return np.vstack([t, tail])


def solve_unseen(
    hs: Mapping[int, int],
    n_writes: float,
    p: float,
    grid_cap: int = GRID_CAP,
    support_slack: Optional[float] = SUPPORT_SLACK,
) -> tuple[float, np.ndarray]:
    """Recover the interval histogram ``H`` from the sampled one.

    Returns (estimated distinct count, H over the grid) for the fingerprints
    whose sample multiplicity is at most the LP cutoff; frequent ones are the
    caller's business.  The L1 fit is weighted by 1/sqrt(f_j + 1) and the
    total occurrence mass is pinned to ``n_writes``.  With ``support_slack``
    set, two more passes find the smallest and largest distinct counts whose
    fit is within that slack of optimal, and the midpoint is returned.
    """
    j_hi, grid = lp_support(p, grid_cap)
    f = np.array([hs.get(j, 0) for j in range(1, j_hi + 1)], dtype=float)
    if n_writes <= 0:
        return 0.0, np.zeros(grid)
    f_obs = np.append(f, 0.0)
    rows = len(f_obs)
    t = thinning_matrix(p, j_hi, grid)
    w = 1.0 / np.sqrt(f_obs + 1.0)
    c = np.arange(1, grid + 1, dtype=float)

    # variables: [H (grid), s (rows)];  s >= |f - T H|
    eye = np.eye(rows)
    a_ub = np.vstack([np.hstack([-t, -eye]), np.hstack([t, -eye])])
    b_ub = np.concatenate([-f_obs, f_obs])
    a_eq = np.concatenate([c, np.zeros(rows)])[None, :]
    b_eq = np.array([float(n_writes)])
    cost = np.concatenate([np.zeros(grid), w])
    opts = {"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL}
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=opts)
    if res.status != 0:
        raise EstimationError(f"unseen LP failed (status {res.status}): {res.message}; f={f.tolist()} N={n_writes} p={p}")
    h = res.x[:grid]
    u = float(h.sum())
    if support_slack is not None:
        # the optimal fit rarely pins the distinct count; take the centre of
        # the range reachable within ``support_slack`` of the best fit
        a_ub2 = np.vstack([a_ub, cost[None, :]])
        b_ub2 = np.append(b_ub, res.fun + support_slack)
        ones = np.concatenate([np.ones(grid), np.zeros(rows)])
        lo = linprog(ones, A_ub=a_ub2, b_ub=b_ub2, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=opts)
        hi = linprog(-ones, A_ub=a_ub2, b_ub=b_ub2, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=opts)
        if lo.status == 0 and hi.status == 0:
            u = 0.5 * (lo.fun - hi.fun)
            h = 0.5 * (lo.x[:grid] + hi.x[:grid])
    return u, h


def estimate_ldss(
    hs: Mapping[int, int],
    n_writes: int,
    p: float,
    stream: int = 0,
    interval: int = 0,
    grid_cap: int = GRID_CAP,
    support_slack: Optional[float] = SUPPORT_SLACK,
) -> LdssEstimate:
    """Estimate a stream's LDSS from its sampled frequency histogram."""
    if n_writes < 0:
        raise ValueError("n_writes must be >= 0")
    if not 0.0 < p <= 1.0:
        raise ValueError("sample rate must be in (0, 1]")
    t0 = time.perf_counter()
    j_hi, _ = lp_support(p, grid_cap)
    frequent = {j: f for j, f in hs.items() if j > j_hi and f > 0}
    rare = {j: f for j, f in hs.items() if j <= j_hi and f > 0}
    observed_distinct = sum(frequent.values()) + sum(rare.values())

    u_freq = float(sum(frequent.values()))
    mass_freq = sum(j * f for j, f in frequent.items()) / p
    rare_mass = float(sum(j * f for j, f in rare.items()))
    n_lp = max(n_writes - mass_freq, rare_mass)
    if p >= 1.0:
        # every occurrence was observed: nothing is unseen
        u_lp = float(sum(rare.values()))
    elif rare:
        u_lp, _ = solve_unseen(rare, n_lp, p, grid_cap, support_slack)
    else:
        u_lp = 0.0
    u = u_freq + u_lp
    u = min(max(u, observed_distinct, 1.0 if n_writes else 0.0), float(n_writes))
    ldss = float(n_writes) - u
    return LdssEstimate(stream, interval, n_writes, ldss, u, lp_ms=(time.perf_counter() - t0) * 1e3)


def naive_ldss(hs: Mapping[int, int], p: float) -> float:
    """Sampled duplicates scaled by 1/p (the sampling-only estimator)."""
    return sum((j - 1) * f for j, f in hs.items()) / p


def bypass_floor(interval_writes: int) -> float:
    return max(MIN_STREAM_WRITES, 0.001 * interval_writes)


def estimate_all(
    samples: Mapping[int, Iterable[int]],
    writes: Mapping[int, int],
    p: float,
    interval: int = 0,
    interval_writes: Optional[int] = None,
    ldss_floor: float = LDSS_FLOOR,
    grid_cap: int = GRID_CAP,
    support_slack: Optional[float] = SUPPORT_SLACK,
) -> list[LdssEstimate]:
    """Estimate every stream that wrote during the interval.

    ``samples[s]`` holds the sampled occurrence counts of stream ``s``.
    Streams below the write floor skip the LP and get ``ldss_floor``.  An LP
    failure for one stream is recorded on its estimate (with the floor value)
    and does not stop the others.
    """
    if interval_writes is None:
        interval_writes = sum(writes.values())
    floor_writes = bypass_floor(interval_writes)
    out = []
    for stream in sorted(writes):
        n_i = writes[stream]
        if n_i <= 0:
            continue
        if n_i < floor_writes:
            out.append(LdssEstimate(stream, interval, n_i, ldss_floor, max(0.0, n_i - ldss_floor), bypassed=True))
            continue
        hs = build_ffh(samples.get(stream, ()))
        try:
            est = estimate_ldss(hs, n_i, p, stream, interval, grid_cap, support_slack)
        except EstimationError as exc:
            est = LdssEstimate(stream, interval, n_i, ldss_floor, max(0.0, n_i - ldss_floor), error=str(exc))
        out.append(est)
    return out


# -- forecasting ---------------------------------------------------------------

TUNING_GRID = tuple((a, b) for a in (0.2, 0.5, 0.8) for b in (0.2, 0.5, 0.8))
TUNING_WINDOW = 8


@dataclass
class _Holt:
    alpha: float
    beta: float
    level: float = 0.0
    trend: float = 0.0
    n: int = 0
    errors: deque = field(default_factory=lambda: deque(maxlen=TUNING_WINDOW))

    def forecast(self) -> float:
        return self.level + self.trend

    def update(self, x: float) -> None:
        if self.n:
            self.errors.append(abs(x - self.forecast()))
            prev = self.level
            self.level = self.alpha * x + (1 - self.alpha) * (self.level + self.trend)
            self.trend = self.beta * (self.level - prev) + (1 - self.beta) * self.trend
        else:
            self.level, self.trend = x, 0.0
        self.n += 1

    def score(self) -> float:
        return sum(self.errors) / len(self.errors) if self.errors else math.inf


class SmootherState:
    """Double exponential smoothing with (alpha, beta) picked per step.

    One Holt model runs per grid pair; each step the pair with the lowest
    mean absolute one-step error over the trailing window supplies the
    forecast.  Pass a single pair to get a plain fixed-parameter smoother.
    """

    def __init__(self, grid=TUNING_GRID):
        if not grid:
            raise ValueError("smoothing grid must be non-empty")
        for a, b in grid:
            if not (0 < a <= 1 and 0 <= b <= 1):
                raise ValueError(f"bad smoothing pair ({a}, {b})")
        self.models = [_Holt(a, b) for a, b in grid]
        self.history: list[tuple[float, float]] = []
        self.alpha, self.beta = grid[0]

    def update(self, x: float) -> float:
        previous = self.forecast if self.history else None
        for m in self.models:
            m.update(x)
        best = min(self.models, key=lambda m: m.score())
        self.alpha, self.beta = best.alpha, best.beta
        self._best = best
        err = abs(x - previous) if previous is not None else 0.0
        self.history.append((x, err))
        return self.forecast

    @property
    def level(self) -> float:
        return self._best.level if self.history else 0.0

    @property
    def trend(self) -> float:
        return self._best.trend if self.history else 0.0

    @property
    def forecast(self) -> float:
        if not self.history:
            return 0.0
        return max(0.0, self._best.forecast())


def predict_next(state: SmootherState, new_estimate: float) -> tuple[SmootherState, float]:
    return state, state.update(new_estimate)


# -- estimation triggers ---------------------------------------------------------


class Trigger(enum.Enum):
    INTERVAL_END = "IntervalEnd"
    DEDUP_RATIO_DROP = "DedupRatioDrop"
    STREAM_CHANGE = "StreamChange"


DROP_FRACTION = 0.5


def check_triggers(
    writes_in_interval: int,
    interval_length: int,
    previous_window_ratio: Optional[float] = None,
    window_ratio: Optional[float] = None,
    stream_set_changed: bool = False,
    drop_fraction: float = DROP_FRACTION,
) -> set[Trigger]:
    fired = set()
    if writes_in_interval >= interval_length:
        fired.add(Trigger.INTERVAL_END)
    if (
        previous_window_ratio is not None
        and window_ratio is not None
        and previous_window_ratio > 0
        and window_ratio < drop_fraction * previous_window_ratio
    ):
        fired.add(Trigger.DEDUP_RATIO_DROP)
    if stream_set_changed:
        fired.add(Trigger.STREAM_CHANGE)
    return fired
