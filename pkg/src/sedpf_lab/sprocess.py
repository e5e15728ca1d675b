"""Analytics of the decoding-period process S for the streaming code.

A frame is ``tau`` slots: ``tau - 1`` information packets and one coded
packet.  ``counts[p]`` slots of each frame travel on path ``p`` (the coded
slot included, on ``coded_path``).  A decoding period starts at a frame
entered with nothing left to recover; ``S`` is the number of frames (one
coded packet each) until in-order delivery resumes, with ``S = 0`` for a
frame that loses no information packet.

Three routes to the law of S are provided: the closed forms with the
binomial tail approximation (:func:`p_s`, :func:`moments`), the exact
poisson-binomial expression (:func:`exact_p_s`, :func:`exact_distribution`)
and a seeded Monte Carlo replay of frames (:func:`monte_carlo`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

EXACT_TRIAL_LIMIT = 10_000
DEFAULT_K_MAX = 200


class DivergenceError(ValueError):
    """The printed moment formulas have a pole at ``tau * eps_bar >= 1``."""


@dataclass(frozen=True)
class SProcessSpec:
    tau: int
    counts: tuple[int, ...]
    eps: tuple[float, ...]
    coded_path: int = 1  # 1-based

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.tau < 2:
            raise ValueError("tau must be >= 2")
        if len(self.counts) != len(self.eps) or not self.counts:
            raise ValueError("counts and eps must be non-empty and of equal length")
        if sum(self.counts) != self.tau:
            raise ValueError(f"sum of per-path counts {sum(self.counts)} != tau {self.tau}")
        if any(n < 0 for n in self.counts):
            raise ValueError("per-path counts must be non-negative")
        if not 1 <= self.coded_path <= len(self.counts):
            raise ValueError("coded_path out of range")
        if self.counts[self.coded_path - 1] < 1:
            raise ValueError("the coded path must carry at least the coded slot")
        if any(not 0.0 <= e < 1.0 for e in self.eps):
            raise ValueError("erasure probabilities must lie in [0, 1)")

    @property
    def n_info(self) -> int:
        return self.tau - 1

    @property
    def paths(self) -> int:
        return len(self.counts)

    @property
    def load(self) -> float:
        """Expected erasures per frame, ``sum_p counts[p] * eps[p]``."""
        return math.fsum(n * e for n, e in zip(self.counts, self.eps))

    @property
    def eps_bar(self) -> float:
        return self.load / self.n_info

    def with_coded_path(self, path: int) -> "SProcessSpec":
        return SProcessSpec(self.tau, self.counts, self.eps, path)

    def slot_erasures(self) -> list[float]:
        """Per-slot erasure probabilities of one frame, path by path."""
        out: list[float] = []
        for n, e in zip(self.counts, self.eps):
            out.extend([e] * n)
        return out


@dataclass
class SDistribution:
    pmf: np.ndarray
    tail_mass: float
    mean: float
    second_moment: float
    method: str
    samples: int = 0
    extra: dict = field(default_factory=dict)

    def prob(self, k: int) -> float:
        return float(self.pmf[k]) if 0 <= k < len(self.pmf) else 0.0


def capacity_check(spec: SProcessSpec) -> bool:
    return spec.load < 1.0


def _p0(spec: SProcessSpec) -> float:
    pc = spec.coded_path - 1
    out = 1.0
    for i, (n, e) in enumerate(zip(spec.counts, spec.eps)):
        out *= (1.0 - e) ** (n - 1 if i == pc else n)
    return out


def _p1(spec: SProcessSpec) -> float:
    pc = spec.coded_path - 1
    counts, eps = spec.counts, spec.eps
    others = 1.0
    for j, (n, e) in enumerate(zip(counts, eps)):
        if j != pc:
            others *= (1.0 - e) ** n
    e_c, n_c = eps[pc], counts[pc]
    total = (n_c - 1) * e_c * (1.0 - e_c) ** (n_c - 1) * others
    for i, (n_i, e_i) in enumerate(zip(counts, eps)):
        if i == pc or n_i == 0:
            continue
        rest = 1.0
        for j, (n_j, e_j) in enumerate(zip(counts, eps)):
            if j != i:
                rest *= (1.0 - e_j) ** n_j
        total += n_i * e_i * (1.0 - e_i) ** (n_i - 1) * rest
    return total


def tail_formula(tau: int, eps_bar: float, k: int) -> float:
    """Binomial-substitution tail ``(N/k) e^k (1-e)^(kN) C((k-1)tau, k-1)``."""
    n = tau - 1
    if eps_bar == 0.0:
        return 0.0
    log_term = (
        math.log(n / k)
        + k * math.log(eps_bar)
        + k * n * math.log1p(-eps_bar)
        + _log_comb((k - 1) * tau, k - 1)
    )
    return math.exp(log_term)


def _log_comb(n: int, r: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)


def p_s(spec: SProcessSpec, k: int) -> float:
    """P(S = k): exact for k in {0, 1}, binomial tail approximation beyond."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return _p0(spec)
    if k == 1:
        return _p1(spec)
    return tail_formula(spec.tau, spec.eps_bar, k)


def poisson_binomial_distribution(probs: Sequence[float], r_max: int | None = None) -> np.ndarray:
    """PMF of the number of successes among independent Bernoulli trials.

    Direct convolution, truncated at ``r_max`` successes when given.
    """
    n = len(probs)
    width = n + 1 if r_max is None else min(n, r_max) + 1
    pmf = np.zeros(width)
    pmf[0] = 1.0
    top = 0
    for p in probs:
        top = min(top + 1, width - 1)
        # descending update keeps the previous row intact
        pmf[1 : top + 1] = pmf[1 : top + 1] * (1.0 - p) + pmf[0:top] * p
        pmf[0] *= 1.0 - p
    return pmf


def poisson_binomial_pmf(probs: Sequence[float], r: int) -> float:
    """Probability of exactly ``r`` successes."""
    if not 0 <= r <= len(probs):
        raise ValueError(f"r={r} outside [0, {len(probs)}]")
    return float(poisson_binomial_distribution(probs, r)[r])


def exact_p_s(spec: SProcessSpec, k: int) -> float:
    """Exact P(S = k), k >= 2, by the hitting-time decomposition.

    The first frame must lose ``r >= 2`` slots; the remaining excess ``r - 1``
    is then worked off by the next ``k - 1`` frames, which must lose exactly
    ``k - r`` slots between them, with ballot factor ``(r - 1)/(k - 1)``.
    """
    if k < 2:
        raise ValueError("exact_p_s is defined for k >= 2; use p_s for k in {0, 1}")
    if k * spec.tau > EXACT_TRIAL_LIMIT:
        raise ValueError(f"k*tau = {k * spec.tau} exceeds the exact-convolution guard {EXACT_TRIAL_LIMIT}")
    slots = spec.slot_erasures()
    first = poisson_binomial_distribution(slots)
    later = poisson_binomial_distribution(slots * (k - 1), k - 2)
    total = 0.0
    for r in range(2, min(k, spec.tau) + 1):
        total += first[r] * (r - 1) / (k - 1) * later[k - r]
    return total


def exact_distribution(spec: SProcessSpec, k_max: int = DEFAULT_K_MAX) -> SDistribution:
    """Exact pmf of S on ``0..k_max`` with the residual as ``tail_mass``."""
    if k_max * spec.tau > EXACT_TRIAL_LIMIT:
        raise ValueError("k_max*tau exceeds the exact-convolution guard")
    frame = poisson_binomial_distribution(spec.slot_erasures())
    pmf = np.zeros(k_max + 1)
    pmf[0] = _p0(spec)
    if k_max >= 1:
        pmf[1] = _p1(spec)
    # later[j] = P(j erasures in the m frames following the first), m = k - 1
    later = np.zeros(k_max + 1)
    later[0] = 1.0
    rs = np.arange(2, spec.tau + 1)
    for k in range(2, k_max + 1):
        later = np.convolve(later, frame)[: k_max + 1]
        r = rs[rs <= k]
        pmf[k] = float(np.sum(frame[r] * (r - 1) / (k - 1) * later[k - r]))
    ks = np.arange(k_max + 1)
    tail = max(0.0, 1.0 - math.fsum(pmf))
    return SDistribution(
        pmf=pmf,
        tail_mass=tail,
        mean=float(np.dot(ks, pmf)),
        second_moment=float(np.dot(ks * ks, pmf)),
        method="exact-oracle",
    )


def approx_distribution(spec: SProcessSpec, k_max: int = DEFAULT_K_MAX) -> SDistribution:
    """Closed-form pmf (exact k<=1, tail approximation beyond) truncated at k_max."""
    pmf = np.array([p_s(spec, k) for k in range(k_max + 1)])
    ks = np.arange(k_max + 1)
    return SDistribution(
        pmf=pmf,
        tail_mass=max(0.0, 1.0 - math.fsum(pmf)),
        mean=float(np.dot(ks, pmf)),
        second_moment=float(np.dot(ks * ks, pmf)),
        method="closed-form",
    )


def moments(spec: SProcessSpec) -> tuple[float, float]:
    """Closed-form approximations of (E[S], E[S^2])."""
    tau, n, e = spec.tau, spec.n_info, spec.eps_bar
    if tau * e >= 1.0:
        raise DivergenceError(f"tau*eps_bar = {tau * e:.6g} >= 1: moment formulas diverge")
    p1 = _p1(spec)
    core = tau * n * e * e * (1.0 - e) ** n
    gap = 1.0 - tau * e
    mean = p1 + core / gap
    second = p1 + (1.0 - e + gap * gap) * core / gap**3
    return mean, second


@dataclass(frozen=True)
class BufferingBound:
    statement: float
    proof: float
    mean_s: float
    second_s: float
    p0: float


def delay_bound(spec: SProcessSpec, delta: Sequence[float]) -> BufferingBound:
    """Asymptotic mean buffering delay bound per transmitted packet.

    ``statement`` weights path p by ``max(N_p (N_p - 1), 1) * delta_p``;
    ``proof`` uses ``delta_p N_p (delta_p N_p - 1)`` as the renewal-reward
    derivation has it.  ``delta`` is the per-packet transmission time of each
    path, in the time unit of the result.  The proof form is not linear in
    ``delta``, so it counts transmission times in slots of the fastest path
    and converts back, which makes it unit free.
    """
    if len(delta) != spec.paths:
        raise ValueError("need one transmission time per path")
    if min(delta) <= 0:
        raise ValueError("transmission times must be positive")
    mean, second = moments(spec)
    p0 = _p0(spec)
    scale = second / (2.0 * spec.tau * (mean + p0))
    unit = min(delta)
    stmt = math.fsum(max(n * (n - 1), 1) * d for n, d in zip(spec.counts, delta))
    proof = unit * math.fsum((d / unit) * n * ((d / unit) * n - 1.0)
                             for n, d in zip(spec.counts, delta))
    return BufferingBound(scale * stmt, scale * proof, mean, second, p0)


def lossiest_path(eps: Sequence[float]) -> int:
    """1-based argmax of the erasure rates, lowest index on ties."""
    best = 0
    for i, e in enumerate(eps):
        if e > eps[best]:
            best = i
    return best + 1


def coded_path_delay_ratio(spec: SProcessSpec, alt_path: int) -> float:
    """P(S=0) with the coded slot on the lossiest path over P(S=0) on ``alt_path``."""
    lossy = spec.with_coded_path(lossiest_path(spec.eps))
    alt = spec.with_coded_path(alt_path)
    return _p0(lossy) / _p0(alt)


def monte_carlo(
    spec: SProcessSpec,
    frames: int = 1_000_000,
    seed: int = 0,
    k_max: int = DEFAULT_K_MAX,
    chunk: int = 1 << 20,
) -> SDistribution:
    """Empirical law of S from ``frames`` simulated frames.

    Frames left inside an unfinished period at the end are discarded.
    """
    rng = np.random.default_rng(seed)
    pc = spec.coded_path - 1
    info_n = [n - (1 if i == pc else 0) for i, n in enumerate(spec.counts)]
    counts = np.zeros(k_max + 2, dtype=np.int64)
    periods = 0
    carry_err = np.zeros(0, dtype=np.int64)
    carry_ok = np.zeros(0, dtype=np.int64)
    remaining = frames
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        err = np.zeros(m, dtype=np.int64)
        for n, e in zip(info_n, spec.eps):
            if n and e > 0.0:
                err += rng.binomial(n, e, size=m)
        ok = (rng.random(m) >= spec.eps[pc]).astype(np.int64)
        err = np.concatenate((carry_err, err))
        ok = np.concatenate((carry_ok, ok))
        got, used, _ = kernels.s_walk(err, ok, counts)
        periods += got
        carry_err, carry_ok = err[used:], ok[used:]
    if periods == 0:
        raise RuntimeError("no decoding period completed; increase frames")
    pmf = counts[: k_max + 1] / periods
    overflow = counts[k_max + 1] / periods
    ks = np.arange(k_max + 1)
    return SDistribution(
        pmf=pmf,
        tail_mass=float(overflow),
        mean=float(np.dot(ks, pmf)),
        second_moment=float(np.dot(ks * ks, pmf)),
        method="monte-carlo",
        samples=periods,
        extra={"counts": counts, "unfinished_frames": int(carry_err.size)},
    )
