"""Per-path delay and loss statistics.

A ``DelayEstimator`` ingests ``(send_time, arrival | LOST)`` observations for
one path; ``refresh`` turns it into an immutable ``PathModel`` snapshot that
the scheduler reads.  Timestamps are kept as integer nanoseconds so constant
increments give exactly zero variance.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LOST = None
NS = 1_000_000_000
DEFAULT_CAPACITY = 256
DEFAULT_REFRESH_PERIOD = 0.5
DEFAULT_MIN_SAMPLES = 8
DELAY_QUANTILE = 99.9


class CausalityError(ValueError):
    """An arrival earlier than its send time, or send times going backwards."""


@dataclass(frozen=True)
class Gaussian:
    mean: float
    var: float = 0.0

    def __post_init__(self):
        if not self.var >= 0:
            raise ValueError(f"variance must be >= 0, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def shift(self, c: float) -> "Gaussian":
        return Gaussian(self.mean + c, self.var)


@dataclass(frozen=True)
class PathModel:
    """Snapshot of one path's parameters.

    ``delta_mean``/``delta_var`` describe the per-slot arrival increment;
    ``delay_mean``/``delay_var`` the one-way delay, used when a path has no
    arrival history yet and by the RTT-based baseline.
    """

    path_id: int
    slot_duration: float
    delay_bound: float
    delta_mean: float
    delta_var: float = 0.0
    erasure_rate: float = 0.0
    last_arrival: float | None = None
    delay_mean: float = 0.0
    delay_var: float = 0.0
    stale: bool = False

    def __post_init__(self):
        if self.path_id < 1:
            raise ValueError("path_id must be >= 1")
        if not self.slot_duration > 0:
            raise ValueError("slot duration must be positive")
        if self.delay_bound < self.slot_duration:
            object.__setattr__(self, "delay_bound", self.slot_duration)
        if self.delta_var < 0 or self.delay_var < 0:
            raise ValueError("variances must be >= 0")
        if not 0 <= self.erasure_rate < 1:
            raise ValueError("erasure rate must lie in [0, 1)")

    @cached_property
    def window(self) -> int:
        # small tolerance so 0.12/0.01 does not round up to 13
        return max(1, math.ceil(self.delay_bound / self.slot_duration - 1e-9))

    @property
    def rtt(self) -> float:
        return 2.0 * self.delay_mean


def z_distribution(model: PathModel, window: int | None = None) -> Gaussian:
    """Gaussian law of the arrival spread over ``window`` slots (default the
    model's window): a sum of that many i.i.d. increments."""
    d = model.window if window is None else window
    if d < 1:
        raise ValueError(f"window must be >= 1, got {d}")
    return Gaussian(d * model.delta_mean, d * model.delta_var)


def monte_carlo_z(model: PathModel, rng: np.random.Generator, n: int = 100_000,
                  window: int | None = None) -> np.ndarray:
    """Samples of ``max_{j<=d} a_{s-d+j} - a_{s-d}`` for monotone arrivals.

    Increments are Gaussian truncated at zero, so the maximum of the prefix
    sums is the last one; this checks that collapse by brute force.
    """
    d = model.window if window is None else window
    inc = rng.normal(model.delta_mean, math.sqrt(model.delta_var), size=(n, d))
    inc = np.maximum(inc, 0.0)
    return np.cumsum(inc, axis=1).max(axis=1)


# --- expected maximum -------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _clark_pair(m1: float, v1: float, m2: float, v2: float) -> tuple[float, float]:
    """Mean and variance of max(X1, X2) for independent Gaussians."""
    a2 = v1 + v2
    if a2 <= 0.0:
        return (m1, 0.0) if m1 >= m2 else (m2, 0.0)
    a = math.sqrt(a2)
    alpha = (m1 - m2) / a
    cdf = 0.5 * (1.0 + math.erf(alpha / _SQRT2))
    pdf = _INV_SQRT2PI * math.exp(-0.5 * alpha * alpha)
    mean = m1 * cdf + m2 * (1.0 - cdf) + a * pdf
    second = (m1 * m1 + v1) * cdf + (m2 * m2 + v2) * (1.0 - cdf) + (m1 + m2) * a * pdf
    return mean, max(second - mean * mean, 0.0)


def max_gaussian(gs: Sequence[Gaussian]) -> Gaussian:
    """Moment-matched Gaussian for the max of independent Gaussians.

    Pairwise Clark folding in descending-mean order (wider first on equal
    means); exact for two inputs and for all-degenerate inputs.  With three
    or more inputs the fold order matters, so means that differ only by
    rounding can give visibly different results.
    """
    if not gs:
        raise ValueError("need at least one Gaussian")
    order = sorted(gs, key=lambda g: (-g.mean, -g.var))
    m, v = order[0].mean, order[0].var
    for g in order[1:]:
        m, v = _clark_pair(m, v, g.mean, g.var)
    return Gaussian(m, v)


def expected_max_gaussians(gs: Sequence[Gaussian]) -> float:
    return max_gaussian(gs).mean


def monte_carlo_max(gs: Sequence[Gaussian], rng: np.random.Generator, n: int = 200_000) -> np.ndarray:
    means = np.array([g.mean for g in gs])
    stds = np.sqrt([g.var for g in gs])
    return (means + stds * rng.standard_normal((n, len(gs)))).max(axis=1)


# --- estimation -------------------------------------------------------------

class DelayEstimator:
    """Sliding window of per-slot observations for one path."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, refresh_period: float = DEFAULT_REFRESH_PERIOD,
                 min_samples: int = DEFAULT_MIN_SAMPLES, check_causality: bool = True):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self.refresh_period = refresh_period
        self.min_samples = min_samples
        self.check_causality = check_causality
        self.samples: deque[tuple[int, int | None]] = deque(maxlen=capacity)
        self.loss_count = 0
        self.total = 0
        self.fresh = 0  # observations since the last refresh
        self.last_arrival: float | None = None

    def observe(self, send_time: float, arrival_time: float | None) -> "DelayEstimator":
        s = round(send_time * NS)
        if self.samples and s < self.samples[-1][0]:
            raise CausalityError("send times must be nondecreasing")
        if arrival_time is LOST:
            a = None
            self.loss_count += 1
        else:
            a = round(arrival_time * NS)
            if self.check_causality and a < s:
                raise CausalityError(f"arrival {arrival_time} precedes send {send_time}")
            if self.last_arrival is None or arrival_time > self.last_arrival:
                self.last_arrival = arrival_time
        self.samples.append((s, a))
        self.total += 1
        self.fresh += 1
        return self

    @property
    def erasure_rate(self) -> float:
        return self.loss_count / self.total if self.total else 0.0

    def increments(self) -> np.ndarray:
        """Arrival increments (ns) between consecutive slots both received."""
        out = []
        prev = None
        for _, a in self.samples:
            if a is not None and prev is not None:
                out.append(a - prev)
            prev = a
        return np.array(out, dtype=np.int64)

    def delays(self) -> np.ndarray:
        return np.array([a - s for s, a in self.samples if a is not None], dtype=np.int64)

    def cadence(self) -> float | None:
        if len(self.samples) < 2:
            return None
        span = self.samples[-1][0] - self.samples[0][0]
        return span / (len(self.samples) - 1) / NS if span > 0 else None


def _int_var(x: np.ndarray) -> float:
    # exact for integer nanoseconds: n*sum(x^2) - sum(x)^2 in Python ints
    n = len(x)
    if n < 2:
        return 0.0
    xs = [int(v) for v in x]
    s, s2 = sum(xs), sum(v * v for v in xs)
    return (n * s2 - s * s) / (n * (n - 1)) / NS**2


def refresh(model: PathModel, est: DelayEstimator) -> PathModel:
    """Recompute a model from the estimator window.

    With fewer than ``min_samples`` fresh observations the old model is
    returned with ``stale`` set.
    """
    inc = est.increments()
    delays = est.delays()
    if est.fresh < est.min_samples or len(inc) < 2 or len(delays) < 2:
        return replace(model, stale=True)
    est.fresh = 0
    slot = est.cadence() or model.slot_duration
    bound = float(np.percentile(delays, DELAY_QUANTILE, method="higher")) / NS
    return PathModel(
        path_id=model.path_id,
        slot_duration=slot,
        delay_bound=max(bound, slot),
        delta_mean=float(np.mean(inc)) / NS,
        delta_var=_int_var(inc),
        erasure_rate=min(est.erasure_rate, 1.0 - 1e-12),
        last_arrival=est.last_arrival,
        delay_mean=float(np.mean(delays)) / NS,
        delay_var=_int_var(delays),
        stale=False,
    )


# --- trace ingestion --------------------------------------------------------

TRACE_HEADER = ("path_id", "send_time_s", "arrival_time_s")


def read_trace(source: str | Path | Iterable[str]) -> list[tuple[int, float, float | None]]:
    """Parse ``path_id,send_time_s,arrival_time_s|LOST`` lines (header optional)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and "," not in source):
        lines: Iterable[str] = io.StringIO(Path(source).read_text())
    elif isinstance(source, str):
        lines = io.StringIO(source)
    else:
        lines = source
    rows = []
    for rec in csv.reader(lines):
        if not rec or rec[0].startswith("#"):
            continue
        if rec[0].strip() == "path_id":
            continue
        if len(rec) != 3:
            raise ValueError(f"trace line needs 3 fields: {rec!r}")
        arrival = rec[2].strip()
        rows.append((int(rec[0]), float(rec[1]), None if arrival == "LOST" else float(arrival)))
    return rows


def fit_trace(source, slot_hint: float = 0.01, **est_kwargs) -> dict[int, PathModel]:
    """Fit one model per path from a trace; clock offsets between the two ends
    are tolerated because only increments and relative delays are used."""
    ests: dict[int, DelayEstimator] = {}
    for pid, send, arrival in sorted(read_trace(source), key=lambda r: (r[0], r[1])):
        est = ests.setdefault(pid, DelayEstimator(check_causality=False, min_samples=2, **est_kwargs))
        est.observe(send, arrival)
    out = {}
    for pid, est in sorted(ests.items()):
        base = PathModel(pid, slot_hint, slot_hint, 0.0)
        out[pid] = refresh(base, est)
    return out
