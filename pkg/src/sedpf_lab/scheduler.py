"""Path and slot selection.

Every path offers slots of fixed duration starting at ``origin + s * T_p``.
A selector picks, for the next packet, one path among those with a free slot
inside the lookahead horizon and consumes that path's first free slot.

S-EDPF ranks paths by the expected in-order delivery time of the packet:
the expected maximum of the candidate's predicted arrival and the predicted
arrivals of the last packet already assigned to every path.  Ties go to
the earlier mean arrival of the candidate, then to the candidate with the
smaller arrival variance, then to the lowest path id.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .pathstats import Gaussian, PathModel, expected_max_gaussians

KIND_INFO = "info"
KIND_CODED = "coded"
KIND_RETX = "retx"


class Backpressure(RuntimeError):
    """No usable path has a free slot inside the horizon.  ``paths`` lists
    the paths whose next slot would unblock the caller."""

    def __init__(self, msg: str, paths: Sequence[int] = ()):
        super().__init__(msg)
        self.paths = tuple(paths)


class FrameStall(RuntimeError):
    """An information position of the frame has no packet to send."""


class Selector(str, enum.Enum):
    SEDPF = "sedpf"
    EDPF = "edpf"
    LOWRTT = "lowrtt"
    RR = "rr"


@dataclass(frozen=True)
class Assignment:
    seq: int
    path_id: int
    slot_index: int
    send_time: float
    predicted_delivery_cost: float
    kind: str = KIND_INFO


@dataclass(frozen=True)
class FramePlan:
    """A frame of ``tau`` slots: ``tau - 1`` information packets then one coded
    packet.  ``coded_path`` None means the lossiest path at frame time."""

    tau: int
    coded_path: int | None = None

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be >= 2")

    @property
    def n_info(self) -> int:
        return self.tau - 1


class ScheduleState:
    """Per-path slot clocks, last assigned slots and fed-back arrivals."""

    def __init__(self, models: Sequence[PathModel], slot_durations: Sequence[float] | None = None,
                 origins: Sequence[float] | None = None, horizon: float | None = None):
        if not models:
            raise ValueError("need at least one path")
        for i, m in enumerate(models):
            if m.path_id != i + 1:
                raise ValueError("models must be ordered by path_id starting at 1")
        self.models = list(models)
        P = len(models)
        self.slot_durations = list(slot_durations or [m.slot_duration for m in models])
        self.origins = list(origins or [0.0] * P)
        self.horizon = horizon
        self.now = 0.0
        self.next_slot = [0] * P
        self.last_slot: list[int | None] = [None] * P  # s_{p,k}: last info-bearing slot
        self._known_slots: list[list[int]] = [[] for _ in range(P)]
        self._known_arrivals: list[list[float]] = [[] for _ in range(P)]
        self.frame_pos = 0
        self.frame_counts = [0] * P
        self.frame_quota: list[int] = [0] * P  # info slots left per path in this frame
        self.frame_coded: int | None = None
        self.completed_frames: list[tuple[int, ...]] = []
        self.coded_paths: list[int] = []
        self.rr_next = 0

    @property
    def paths(self) -> int:
        return len(self.models)

    def slot_time(self, path_id: int, slot: int) -> float:
        return self.origins[path_id - 1] + slot * self.slot_durations[path_id - 1]

    def next_free_time(self, path_id: int) -> float:
        return self.slot_time(path_id, self.next_slot[path_id - 1])

    def available(self) -> list[int]:
        if self.horizon is None:
            return list(range(1, self.paths + 1))
        # a slot is open once its start is within the horizon
        edge = self.now + self.horizon + 1e-12
        return [p for p in range(1, self.paths + 1) if self.next_free_time(p) <= edge]

    def skip_to(self, path_id: int, slot: int) -> None:
        """Mark slots before ``slot`` as passed unused."""
        i = path_id - 1
        if slot > self.next_slot[i]:
            self.next_slot[i] = slot

    def record_arrival(self, path_id: int, slot: int, arrival: float) -> None:
        """Feedback: the packet sent in ``slot`` arrived at ``arrival``."""
        ks, ka = self._known_slots[path_id - 1], self._known_arrivals[path_id - 1]
        j = bisect.bisect_left(ks, slot)
        if j < len(ks) and ks[j] == slot:
            ka[j] = arrival
        else:
            ks.insert(j, slot)
            ka.insert(j, arrival)

    def latest_known(self, path_id: int, upto: int) -> tuple[int, float] | None:
        ks = self._known_slots[path_id - 1]
        j = bisect.bisect_right(ks, upto) - 1
        if j < 0:
            return None
        return ks[j], self._known_arrivals[path_id - 1][j]

    def update_model(self, model: PathModel) -> None:
        self.models[model.path_id - 1] = model

    def claim(self, path_id: int, kind: str) -> tuple[int, float]:
        i = path_id - 1
        slot = self.next_slot[i]
        self.next_slot[i] = slot + 1
        if kind != KIND_CODED:
            self.last_slot[i] = slot
        return slot, self.slot_time(path_id, slot)


def predicted_arrival(state: ScheduleState, path_id: int, slot: int) -> Gaussian:
    """Predicted arrival of the packet sent in ``slot`` of ``path_id``.

    Reference form: the arrival at slot ``s - delta`` (fed back, or
    extrapolated by the mean increment from the latest fed-back arrival)
    plus the window sum of increments.  When the marginal one-way delay law
    is sharper than that (uncorrelated delays) it is used instead, and so it
    is before any feedback exists.
    """
    m = state.models[path_id - 1]
    t = state.slot_time(path_id, slot)
    marginal = Gaussian(t + m.delay_mean, m.delay_var)
    d = m.window
    known = state.latest_known(path_id, slot - d)
    if known is None:
        return marginal
    var = d * m.delta_var
    if m.delay_var < var:
        return marginal
    j, a_j = known
    return Gaussian(max(a_j + (slot - j) * m.delta_mean, t), var)


def last_terms(state: ScheduleState) -> list[Gaussian]:
    """``Z_p + a_{p, s_{p,k} - delta_p}`` for every path already in use."""
    return [predicted_arrival(state, p, s) for p, s in enumerate(state.last_slot, start=1)
            if s is not None]


def candidate_arrival(state: ScheduleState, path_id: int) -> Gaussian:
    return predicted_arrival(state, path_id, state.next_slot[path_id - 1])


def sedpf_cost(state: ScheduleState, path_id: int, terms: list[Gaussian] | None = None) -> tuple[float, Gaussian]:
    """Expected in-order delivery time if the next packet goes on ``path_id``,
    and the candidate's own predicted arrival (the tie-breakers)."""
    a = candidate_arrival(state, path_id)
    if terms is None:
        terms = last_terms(state)
    return expected_max_gaussians([a] + terms), a


def _pick(state: ScheduleState, paths: Sequence[int] | None) -> list[int]:
    cands = state.available() if paths is None else list(paths)
    if not cands:
        raise Backpressure("no free slot within the horizon", range(1, state.paths + 1))
    return cands


def _assign(state: ScheduleState, path_id: int, seq: int, cost: float, kind: str) -> Assignment:
    slot, t = state.claim(path_id, kind)
    return Assignment(seq, path_id, slot, t, cost, kind)


def sedpf_select(state: ScheduleState, seq: int = 0, kind: str = KIND_INFO,
                 paths: Sequence[int] | None = None) -> Assignment:
    best = None
    terms = last_terms(state)
    for p in _pick(state, paths):
        cost, own = sedpf_cost(state, p, terms)
        key = (cost, own.mean, own.var, p)
        if best is None or key < best:
            best = key
    return _assign(state, best[3], seq, best[0], kind)


def edpf_select(state: ScheduleState, seq: int = 0, kind: str = KIND_INFO,
                paths: Sequence[int] | None = None) -> Assignment:
    best = None
    for p in _pick(state, paths):
        key = (candidate_arrival(state, p).mean, p)
        if best is None or key < best:
            best = key
    return _assign(state, best[1], seq, best[0], kind)


def lowrtt_select(state: ScheduleState, seq: int = 0, kind: str = KIND_INFO,
                  paths: Sequence[int] | None = None) -> Assignment:
    best = None
    for p in _pick(state, paths):
        key = (state.models[p - 1].rtt, p)
        if best is None or key < best:
            best = key
    return _assign(state, best[1], seq, best[0], kind)


def rr_select(state: ScheduleState, seq: int = 0, kind: str = KIND_INFO,
              paths: Sequence[int] | None = None) -> Assignment:
    cands = set(_pick(state, paths))
    P = state.paths
    for step in range(P):
        p = (state.rr_next + step) % P + 1
        if p in cands:
            state.rr_next = p % P
            return _assign(state, p, seq, state.next_free_time(p), kind)
    raise Backpressure("no free slot within the horizon", range(1, P + 1))


SELECTORS: dict[Selector, Callable[..., Assignment]] = {
    Selector.SEDPF: sedpf_select,
    Selector.EDPF: edpf_select,
    Selector.LOWRTT: lowrtt_select,
    Selector.RR: rr_select,
}


def get_selector(name: str | Selector) -> Callable[..., Assignment]:
    return SELECTORS[Selector(name)]


def coded_path_select(models: Sequence[PathModel]) -> int:
    """Lossiest path; ties go to the lowest id."""
    if not models:
        raise ValueError("need at least one path")
    best = max(models, key=lambda m: (m.erasure_rate, -m.path_id))
    return best.path_id


def frame_quota(state: ScheduleState, tau: int, coded_path: int) -> list[int]:
    """Slots per path among the next ``tau`` free slots in start-time order.

    At equal start times the coded path sorts last, so the coded packet
    closes the frame.  If the coded path gets no slot it replaces the last one.
    """
    heads = []
    for p in range(1, state.paths + 1):
        s0 = state.next_slot[p - 1]
        for j in range(tau):
            heads.append((state.slot_time(p, s0 + j), p == coded_path, p))
    heads.sort()
    chosen = [p for _, _, p in heads[:tau]]
    if coded_path not in chosen:
        chosen[-1] = coded_path
    quota = [0] * state.paths
    for p in chosen:
        quota[p - 1] += 1
    return quota


def frame_step(state: ScheduleState, plan: FramePlan, next_info: int | None,
               select: Callable[..., Assignment] = sedpf_select) -> Assignment:
    """Emit the next assignment of the frame.

    A frame spans the next ``tau`` free slots across all paths.  Its
    information positions route ``next_info`` through ``select`` over the
    paths with slots left in the frame; the coded packet takes the coded
    path's last slot.  The coded packet's ``seq`` is the frame number (1-based).
    """
    if state.frame_pos == 0:
        pc = plan.coded_path or coded_path_select(state.models)
        state.frame_coded = pc
        state.frame_quota = frame_quota(state, plan.tau, pc)
        state.frame_quota[pc - 1] -= 1
    pc = state.frame_coded
    if state.frame_pos < plan.n_info:
        if next_info is None:
            raise FrameStall("no information packet for an information slot")
        usable = [p for p in range(1, state.paths + 1) if state.frame_quota[p - 1] > 0]
        open_ = set(state.available())
        cands = [p for p in usable if p in open_]
        if not cands:
            raise Backpressure("frame slots not yet within the horizon", usable)
        a = select(state, next_info, KIND_INFO, cands)
        state.frame_quota[a.path_id - 1] -= 1
    else:
        if pc not in state.available():
            raise Backpressure(f"coded path {pc} has no free slot within the horizon", [pc])
        a = _assign(state, pc, len(state.completed_frames) + 1, state.next_free_time(pc), KIND_CODED)
        state.coded_paths.append(pc)
    state.frame_counts[a.path_id - 1] += 1
    state.frame_pos += 1
    if state.frame_pos == plan.tau:
        state.completed_frames.append(tuple(state.frame_counts))
        state.frame_counts = [0] * state.paths
        state.frame_pos = 0
    return a
