"""Deterministic event-driven multipath simulator.

Each path is a slotted link: slot ``s`` of path ``p`` starts at
``s * T_p`` and carries one packet whose arrival is drawn from the path's
delay model, or which is erased.  The sender fills every slot that starts
within a short lookahead horizon, routing information packets with the
configured selector and inserting one coded packet per frame of ``tau``
slots.  The receiver runs the streaming decoder and releases packets in
order; every arrival triggers a lossless acknowledgement that reaches the
sender after the path's feedback delay.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from collections import deque
from dataclasses import asdict, dataclass, field
import numpy as np

from . import codec
from .pathstats import DelayEstimator, PathModel, refresh
from .scheduler import (KIND_CODED, KIND_INFO, KIND_RETX, Backpressure, FramePlan,
                        ScheduleState, Selector, frame_step,
                        get_selector)

ERASED = None
MODES = ("iid", "correlated")

# event kinds, ordered so simultaneous arrivals precede acknowledgements
_EV_ARRIVAL = 0
_EV_ACK = 1
_EV_REFRESH = 2


@dataclass(frozen=True)
class ChannelSpec:
    """One path.

    ``iid``: delay ~ N(base_delay, delay_std^2) truncated at 0, independent
    per slot.  ``correlated``: ``a_s = max(a_{s-1} + max(0, X), t_s + base_delay)``
    with ``X ~ N(inc_mean, delay_std^2)`` (``inc_mean`` defaults to the slot
    duration), so arrivals never reorder within the path.
    """

    path_id: int
    slot_duration: float
    base_delay: float = 0.05
    delay_std: float = 0.0
    erasure: float = 0.0
    feedback_delay: float | None = None
    mode: str = "iid"
    inc_mean: float | None = None

    def __post_init__(self):
        if self.path_id < 1:
            raise ValueError("path_id must be >= 1")
        if not self.slot_duration > 0:
            raise ValueError("slot_duration must be positive")
        if self.base_delay < 0 or self.delay_std < 0:
            raise ValueError("delays must be >= 0")
        if not 0 <= self.erasure <= 1:
            raise ValueError("erasure must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def ack_delay(self) -> float:
        return self.base_delay if self.feedback_delay is None else self.feedback_delay

    def nominal_model(self) -> PathModel:
        T = self.slot_duration
        if self.mode == "iid":
            d_mean, d_var = T, 2 * self.delay_std**2
            delay_var = self.delay_std**2
        else:
            d_mean = T if self.inc_mean is None else self.inc_mean
            d_var, delay_var = self.delay_std**2, 0.0
        return PathModel(
            path_id=self.path_id,
            slot_duration=T,
            delay_bound=max(T, self.base_delay + 3 * self.delay_std),
            delta_mean=d_mean,
            delta_var=d_var,
            erasure_rate=min(self.erasure, 1 - 1e-12),
            delay_mean=self.base_delay,
            delay_var=delay_var,
        )


class Channel:
    """Random state of one path: arrival draws and erasures, one stream each."""

    def __init__(self, spec: ChannelSpec, seed: int):
        self.spec = spec
        ss = np.random.SeedSequence([seed, spec.path_id])
        self._delay_rng, self._loss_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        self._prev: float | None = None

    def transmit(self, slot_index: int, send_time: float) -> tuple[float, bool]:
        """Arrival time the packet would have, and whether it is erased."""
        sp = self.spec
        x = self._delay_rng.normal()
        erased = bool(self._loss_rng.random() < sp.erasure)
        if sp.mode == "iid":
            arrival = send_time + max(0.0, sp.base_delay + sp.delay_std * x)
        else:
            inc = sp.slot_duration if sp.inc_mean is None else sp.inc_mean
            floor = send_time + sp.base_delay
            if self._prev is None:
                arrival = floor
            else:
                arrival = max(self._prev + max(0.0, inc + sp.delay_std * x), floor)
        self._prev = arrival
        return arrival, erased


def channel_transmit(channel: Channel, slot_index: int, now: float) -> float | None:
    """Arrival time of a packet sent at ``now``, or ``ERASED``."""
    arrival, erased = channel.transmit(slot_index, now)
    return ERASED if erased else arrival


@dataclass
class SimConfig:
    channels: list[ChannelSpec]
    selector: str = "sedpf"
    tau: int = 0
    arq: bool = False
    packets: int = 10_000
    duration: float | None = None
    source_rate: float | None = None
    seed: int = 1
    payload_size: int = 1250
    codec_payload: int = 16
    lookahead: float | None = None
    coded_path: str | int = "auto"
    max_window: int | None = None
    estimate: str = "online"
    refresh_period: float = 0.5
    trace: bool = False

    def __post_init__(self):
        if not self.channels:
            raise ValueError("need at least one channel")
        self.channels = [c if isinstance(c, ChannelSpec) else ChannelSpec(**c) for c in self.channels]
        for i, c in enumerate(self.channels):
            if c.path_id != i + 1:
                raise ValueError("channels must be numbered 1..P in order")
        Selector(self.selector)
        if self.tau != 0 and self.tau < 2:
            raise ValueError("tau must be 0 (coding off) or >= 2")
        if self.packets < 1 and self.duration is None:
            raise ValueError("need a positive packet count or a duration")
        if self.source_rate is not None and not self.source_rate > 0:
            raise ValueError("source_rate must be positive")
        if self.estimate not in ("online", "nominal"):
            raise ValueError("estimate must be 'online' or 'nominal'")
        if self.coded_path != "auto":
            if not 1 <= int(self.coded_path) <= len(self.channels):
                raise ValueError("coded_path out of range")
        if not 1 <= self.codec_payload <= self.payload_size:
            raise ValueError("codec_payload must lie in [1, payload_size]")
        if self.max_window is not None and self.max_window < 1:
            raise ValueError("max_window must be >= 1")

    @property
    def horizon(self) -> float:
        if self.lookahead is not None:
            return self.lookahead
        return 2.0 * max(c.slot_duration for c in self.channels)

    @property
    def window(self) -> int:
        """Coding window: explicit, or wide enough to span one feedback loop."""
        if self.max_window is not None:
            return self.max_window
        rate = sum(1.0 / c.slot_duration for c in self.channels)
        loop = max(c.base_delay + 4 * c.delay_std + c.ack_delay for c in self.channels) + self.horizon
        return codec.DEFAULT_MAX_WINDOW + 2 * math.ceil(rate * loop)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = [asdict(c) for c in self.channels]
        return d


@dataclass
class SimMetrics:
    in_order_delay: np.ndarray
    buffering_delay: np.ndarray
    goodput: float
    raw_throughput: float
    sent_info: int
    sent_coded: int
    sent_retx: int
    spurious_retx: int
    erased: int
    delivered: int
    undelivered: int
    recovered_by_code: int
    stale_coded: int
    idle_slots: int
    corrupt: int
    duration: float
    frame_counts: list[tuple[int, ...]] = field(default_factory=list)
    trace: list[tuple] | None = None

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.in_order_delay)) if self.in_order_delay.size else float("nan")

    @property
    def mean_buffering(self) -> float:
        return float(np.mean(self.buffering_delay)) if self.buffering_delay.size else float("nan")

    def box(self, which: str = "in_order") -> dict[str, float]:
        x = self.in_order_delay if which == "in_order" else self.buffering_delay
        if x.size == 0:
            return {k: float("nan") for k in ("median", "q1", "q3", "whisker_lo", "whisker_hi", "p95", "p99")}
        q1, med, q3, p95, p99 = np.percentile(x, [25, 50, 75, 95, 99])
        iqr = q3 - q1
        lo = float(x[x >= q1 - 1.5 * iqr].min())
        hi = float(x[x <= q3 + 1.5 * iqr].max())
        return {"median": float(med), "q1": float(q1), "q3": float(q3),
                "whisker_lo": lo, "whisker_hi": hi, "p95": float(p95), "p99": float(p99)}

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "event", "path", "seq", "kind"])
        for t, ev, path, seq, kind in self.trace or []:
            w.writerow([f"{t:.9f}", ev, path, seq, kind])
        return buf.getvalue()


class _Receiver:
    def __init__(self, cfg: SimConfig, n_paths: int):
        self.decoder = codec.Decoder(mtu=cfg.codec_payload, history=1 << 14)
        self.high_slot = [-1] * n_paths
        self.seen: list[set[int]] = [set() for _ in range(n_paths)]

    def detect_gaps(self, path: int, slot: int) -> list[int]:
        i = path - 1
        lost = []
        if slot > self.high_slot[i]:
            lost = [s for s in range(self.high_slot[i] + 1, slot) if s not in self.seen[i]]
            self.high_slot[i] = slot
        self.seen[i].add(slot)
        # forget slots far behind so the set stays small
        if len(self.seen[i]) > 4096:
            cut = self.high_slot[i] - 2048
            self.seen[i] = {s for s in self.seen[i] if s >= cut}
        return lost


class _Records:
    """Per-sequence timestamps, grown on demand."""

    def __init__(self, n: int):
        self.send = np.full(n + 1, np.nan)
        self.arrival = np.full(n + 1, np.nan)  # first copy, erased or not
        self.delivery = np.full(n + 1, np.nan)
        self.got_info = np.zeros(n + 1, dtype=bool)

    def ensure(self, seq: int) -> None:
        n = self.send.shape[0]
        if seq < n:
            return
        new = max(seq + 1, 2 * n)
        for name in ("send", "arrival", "delivery"):
            ext = np.full(new, np.nan)
            ext[:n] = getattr(self, name)
            setattr(self, name, ext)
        got = np.zeros(new, dtype=bool)
        got[:n] = self.got_info
        self.got_info = got


class _Sim:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        P = self.P = len(cfg.channels)
        self.chans = [Channel(c, cfg.seed) for c in cfg.channels]
        self.payload_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0, 1]))
        self._paybuf = b""
        self._paypos = 0
        coeff_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0, 2]))
        self.state = ScheduleState([c.nominal_model() for c in cfg.channels],
                                   [c.slot_duration for c in cfg.channels], horizon=cfg.horizon)
        self.ests = [DelayEstimator(refresh_period=cfg.refresh_period) for _ in range(P)]
        self.select = get_selector(cfg.selector)
        self.plan = None
        if cfg.tau:
            self.plan = FramePlan(cfg.tau, None if cfg.coded_path == "auto" else int(cfg.coded_path))
        self.encoder = codec.Encoder(coeff_rng, cfg.window)
        self.rx = _Receiver(cfg, P)
        self.limit = cfg.packets if cfg.duration is None else None
        self.rec = _Records(self.limit or 1024)
        self.payloads: dict[int, bytes] = {}
        self.slot_owner: list[dict[int, tuple[str, int]]] = [dict() for _ in range(P)]
        self.last_info_seq = [0] * P
        self.retx_queue: deque[int] = deque()
        self.retx_pending: set[int] = set()
        self.acked = 0
        self.next_seq = 1
        self.c = dict(info=0, coded=0, retx=0, spurious=0, erased=0, idle=0, corrupt=0, stale=0)
        self.events: list[tuple] = []
        self._order = 0
        self.last_send = 0.0
        self.trace: list[tuple] | None = [] if cfg.trace else None

    def push(self, t: float, kind: int, data) -> None:
        self._order += 1
        heapq.heappush(self.events, (t, kind, self._order, data))

    def has_new(self) -> bool:
        return self.limit is None or self.next_seq <= self.limit

    def gen_time(self, seq: int) -> float:
        """When the source hands packet ``seq`` to the sender (0 when backlogged)."""
        rate = self.cfg.source_rate
        return 0.0 if rate is None else (seq - 1) / rate

    # --- sender ---------------------------------------------------------------

    def transmit(self, a, pkt, kind: str, seq: int) -> None:
        arrival, erased = self.chans[a.path_id - 1].transmit(a.slot_index, a.send_time)
        self.slot_owner[a.path_id - 1][a.slot_index] = (kind, seq)
        self.last_send = max(self.last_send, a.send_time)
        if kind != KIND_CODED and np.isnan(self.rec.arrival[seq]):
            self.rec.arrival[seq] = arrival
        if self.trace is not None:
            self.trace.append((a.send_time, "send", a.path_id, seq, kind))
        if erased:
            self.c["erased"] += 1
            if self.trace is not None:
                self.trace.append((arrival, "erase", a.path_id, seq, kind))
            return
        self.push(arrival, _EV_ARRIVAL, (a.path_id, a.slot_index, pkt, kind, seq))

    def _wake_for(self, paths) -> float:
        return min(self.state.next_free_time(p) for p in paths) - self.state.horizon

    def fill(self, now: float) -> float:
        """Assign every slot that entered the horizon; return the next wake time."""
        st, cfg, plan = self.state, self.cfg, self.plan
        st.now = now
        for p in range(1, self.P + 1):
            # slots whose start passed unassigned stay idle
            due = math.ceil(now / st.slot_durations[p - 1] - 1e-9)
            if due > st.next_slot[p - 1]:
                if self.has_new() or self.retx_queue:
                    self.c["idle"] += due - st.next_slot[p - 1]
                st.skip_to(p, due)
        all_paths = range(1, self.P + 1)
        while True:
            avail = st.available()
            if not avail:
                return self._wake_for(all_paths)
            if self.retx_queue:
                seq = self.retx_queue.popleft()
                self.retx_pending.discard(seq)
                if seq <= self.acked or not np.isnan(self.rec.delivery[seq]):
                    continue
                a = self.select(st, seq, KIND_RETX, avail)
                self.c["retx"] += 1
                self.transmit(a, codec.InfoPacket(seq, self.payloads[seq]), KIND_RETX, seq)
                continue
            if cfg.duration is not None and min(st.next_free_time(p) for p in avail) >= cfg.duration:
                return math.inf
            at_info = plan is None or st.frame_pos < plan.n_info
            if at_info and not self.has_new():
                return math.inf
            if at_info and self.gen_time(self.next_seq) > now + 1e-12:
                return self.gen_time(self.next_seq)
            seq = self.next_seq
            if plan is None:
                a = self.select(st, seq, KIND_INFO, avail)
            else:
                try:
                    a = frame_step(st, plan, seq if at_info else None, self.select)
                except Backpressure as bp:
                    return self._wake_for(bp.paths or all_paths)
                if a.kind == KIND_CODED:
                    self.c["coded"] += 1
                    # None when everything is acknowledged; the slot is still spent
                    self.transmit(a, self.encoder.coded(), KIND_CODED, a.seq)
                    continue
            self.send_info(a, seq)

    def _payload(self) -> bytes:
        # random payload bytes drawn in blocks; one draw per packet is slow
        n = self.cfg.codec_payload
        if self._paypos + n > len(self._paybuf):
            self._paybuf = self.payload_rng.bytes(max(n, 1 << 16))
            self._paypos = 0
        self._paypos += n
        return self._paybuf[self._paypos - n : self._paypos]

    def send_info(self, a, seq: int) -> None:
        if seq <= self.last_info_seq[a.path_id - 1]:
            raise AssertionError("information packets must ascend within a path")
        self.last_info_seq[a.path_id - 1] = seq
        self.rec.ensure(seq)
        data = self._payload()
        self.payloads[seq] = data
        pkt = codec.InfoPacket(seq, data)
        self.encoder.push(pkt)
        self.next_seq += 1
        self.rec.send[seq] = a.send_time
        self.c["info"] += 1
        self.transmit(a, pkt, KIND_INFO, seq)

    # --- receiver and feedback ---------------------------------------------------

    def on_arrival(self, now: float, data) -> None:
        path, slot, pkt, kind, seq = data
        if self.trace is not None:
            self.trace.append((now, "arrive", path, seq, kind))
        lost = self.rx.detect_gaps(path, slot)
        if kind != KIND_CODED:
            if self.rec.got_info[seq]:
                self.c["spurious"] += 1
            self.rec.got_info[seq] = True
        if pkt is not None:
            res = self.rx.decoder.ingest(pkt)
            if res.stale:
                self.c["stale"] += 1
            for d in res.delivered:
                self.rec.delivery[d.seq] = now
                if d.payload[: self.cfg.codec_payload] != self.payloads[d.seq]:
                    self.c["corrupt"] += 1
                if self.trace is not None:
                    self.trace.append((now, "deliver", path, d.seq, KIND_INFO))
        self.push(now + self.cfg.channels[path - 1].ack_delay, _EV_ACK,
                  (path, slot, now, self.rx.decoder.frontier, lost))

    def on_ack(self, now: float, data) -> None:
        path, slot, arr, frontier, lost = data
        if self.trace is not None:
            self.trace.append((now, "ack", path, frontier, "ack"))
        if frontier > self.acked:
            self.acked = frontier
            self.encoder.ack(frontier)
        st, est = self.state, self.ests[path - 1]
        owner = self.slot_owner[path - 1]
        for s in lost:
            t_s = st.slot_time(path, s)
            if not est.samples or round(t_s * 1e9) >= est.samples[-1][0]:
                est.observe(t_s, None)
            k_s = owner.pop(s, None)
            if self.cfg.arq and k_s is not None and k_s[0] != KIND_CODED:
                sq = k_s[1]
                if sq > self.acked and np.isnan(self.rec.delivery[sq]) and sq not in self.retx_pending:
                    self.retx_queue.append(sq)
                    self.retx_pending.add(sq)
        t = st.slot_time(path, slot)
        if not est.samples or round(t * 1e9) >= est.samples[-1][0]:
            est.observe(t, arr)
        st.record_arrival(path, slot, arr)
        owner.pop(slot, None)

    def on_refresh(self) -> None:
        for p in range(self.P):
            m = refresh(self.state.models[p], self.ests[p])
            if not m.stale:
                self.state.update_model(m)

    # --- main loop --------------------------------------------------------------

    def run(self) -> SimMetrics:
        cfg = self.cfg
        if cfg.estimate == "online":
            self.push(cfg.refresh_period, _EV_REFRESH, None)
        now = 0.0
        wake = 0.0
        while True:
            # the sender only has new work once its wake time passes or a
            # retransmission is queued
            if now >= wake or self.retx_queue:
                wake = self.fill(now)
                if wake <= now:
                    raise AssertionError("sender made no progress")
            if self.events and self.events[0][0] <= wake:
                t, kind, _, data = heapq.heappop(self.events)
                now = max(now, t)
                if kind == _EV_ARRIVAL:
                    self.on_arrival(now, data)
                elif kind == _EV_ACK:
                    self.on_ack(now, data)
                else:
                    self.on_refresh()
                    if wake < math.inf or self.events:
                        self.push(now + cfg.refresh_period, _EV_REFRESH, None)
                continue
            if wake == math.inf:
                break
            now = wake
        return self.metrics()

    def metrics(self) -> SimMetrics:
        cfg, rec, c = self.cfg, self.rec, self.c
        n = self.next_seq - 1
        sent, arr, dl = rec.send[1 : n + 1], rec.arrival[1 : n + 1], rec.delivery[1 : n + 1]
        ok = ~np.isnan(dl)
        k = int(ok.sum())
        if not ok[:k].all() or np.any(np.diff(dl[:k]) < 0):
            raise AssertionError("in-order delivery violated")
        duration = max(self.last_send + max(ch.slot_duration for ch in cfg.channels), 1e-12)
        bits = cfg.payload_size * 8
        transmitted = c["info"] + c["coded"] + c["retx"]
        return SimMetrics(
            in_order_delay=dl[:k] - sent[:k],
            # a packet recovered before its own copy would have landed waited 0
            buffering_delay=np.maximum(dl[:k] - arr[:k], 0.0),
            goodput=k * bits / duration,
            raw_throughput=transmitted * bits / duration,
            sent_info=c["info"],
            sent_coded=c["coded"],
            sent_retx=c["retx"],
            spurious_retx=c["spurious"],
            erased=c["erased"],
            delivered=k,
            undelivered=n - k,
            recovered_by_code=int(np.count_nonzero(ok[:k] & ~rec.got_info[1 : k + 1])),
            stale_coded=c["stale"],
            idle_slots=c["idle"],
            corrupt=c["corrupt"],
            duration=duration,
            frame_counts=list(self.state.completed_frames),
            trace=self.trace,
        )


def in_order_delivery(arrivals) -> np.ndarray:
    """Delivery instants of packets 1..n under in-order release.

    Packet k is released once it and every lower index have arrived, so its
    delivery is the running maximum of arrivals; ``ERASED`` (or NaN) never
    arrives and blocks everything after it (``inf``).
    """
    a = np.array([math.inf if x is ERASED else x for x in arrivals], dtype=float)
    a[np.isnan(a)] = math.inf
    return np.maximum.accumulate(a) if a.size else a


def run(cfg: SimConfig) -> SimMetrics:
    """Simulate ``cfg``; deterministic given the seed."""
    return _Sim(cfg).run()
