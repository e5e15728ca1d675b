"""Streaming random linear code over GF(256).

Coded packets are random linear combinations of a window of information
packets.  The decoder keeps a reduced row-echelon system over the packets
that are neither delivered nor individually known, and releases the longest
in-order run whenever the frontier can advance.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .gf import INV

DEFAULT_MAX_WINDOW = 64
SEED_COEFF_THRESHOLD = 16
KIND_INFO = 0
KIND_CODED = 1

_HEADER = struct.Struct("<BIIIQH")
HEADER_SIZE = _HEADER.size


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class InfoPacket:
    seq: int
    payload: bytes

    @property
    def length(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class CodedPacket:
    coded_index: int
    window_lo: int
    window_hi: int
    coeffs: bytes
    payload: bytes
    rng_seed: int | None = None

    def __post_init__(self):
        if len(self.coeffs) != self.window_hi - self.window_lo + 1:
            raise CodecError("coefficient vector length does not match the window")

    @property
    def window_len(self) -> int:
        return self.window_hi - self.window_lo + 1


def draw_coeffs(rng: np.random.Generator, window_len: int) -> bytes:
    """``window_len`` i.i.d. uniform field elements from ``rng``."""
    if window_len <= 0:
        return b""
    return rng.integers(0, 256, size=window_len, dtype=np.uint8).tobytes()


def coeffs_from_seed(seed: int, window_len: int) -> bytes:
    """Regenerate the nonzero coefficient vector carried by a seed.

    The vector is the SHAKE-128 output for the 8-byte little-endian seed, so
    a seed maps to the same vector on every platform.  An all-zero draw is
    replaced by the output for the seed followed by a redraw counter.
    """
    if window_len <= 0:
        return b""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    c = hashlib.shake_128(key).digest(window_len)
    redraw = 0
    while not any(c):
        redraw += 1
        c = hashlib.shake_128(key + redraw.to_bytes(4, "little")).digest(window_len)
    return c


def encode(window: Sequence[InfoPacket], coeffs: Sequence[int] | bytes, *, coded_index: int = 1,
           rng_seed: int | None = None) -> CodedPacket:
    """Combine consecutive information packets with the given coefficients.

    Shorter payloads are zero-padded to the longest one in the window.
    """
    if not window:
        raise CodecError("cannot encode an empty window")
    coeffs = bytes(coeffs)
    if len(coeffs) != len(window):
        raise CodecError(f"{len(coeffs)} coefficients for a window of {len(window)} packets")
    lo = window[0].seq
    for i, pkt in enumerate(window):
        if pkt.seq != lo + i:
            raise CodecError("window must hold consecutive sequence numbers")
    lengths = [len(p.payload) for p in window]
    width = max(lengths)
    if min(lengths) == width:
        rows = np.frombuffer(b"".join(p.payload for p in window), dtype=np.uint8).reshape(len(window), width)
    else:
        rows = np.zeros((len(window), width), dtype=np.uint8)
        for i, pkt in enumerate(window):
            rows[i, : lengths[i]] = np.frombuffer(pkt.payload, dtype=np.uint8)
    out = np.empty(width, dtype=np.uint8)
    kernels.gf_combine(np.frombuffer(coeffs, dtype=np.uint8), rows, out)
    return CodedPacket(coded_index, lo, window[-1].seq, coeffs, out.tobytes(), rng_seed)


class Encoder:
    """Sender-side sliding window of information packets.

    ``acked`` is the highest sequence the sender knows the receiver delivered.
    Payloads are kept zero-padded in a ring so a coded packet is a single
    combination over a block of rows.
    """

    def __init__(self, rng: np.random.Generator, max_window: int = DEFAULT_MAX_WINDOW):
        if max_window < 1:
            raise ValueError("max_window must be positive")
        self.rng = rng
        self.max_window = max_window
        self.acked = 0
        self.coded_sent = 0
        self._oldest = 1
        self._newest = 0
        cap = 64
        self._ring = np.zeros((cap, 0), dtype=np.uint8)
        self._len = np.zeros(cap, dtype=np.int64)

    def _grow(self, rows: int, width: int) -> None:
        cap, old_w = self._ring.shape
        new_cap = cap
        while new_cap < rows:
            new_cap *= 2
        ring = np.zeros((new_cap, max(width, old_w)), dtype=np.uint8)
        lens = np.zeros(new_cap, dtype=np.int64)
        for seq in range(self._oldest, self._newest + 1):
            ring[seq % new_cap, :old_w] = self._ring[seq % cap]
            lens[seq % new_cap] = self._len[seq % cap]
        self._ring, self._len = ring, lens

    def push(self, pkt: InfoPacket) -> None:
        if self._newest and pkt.seq != self._newest + 1:
            raise CodecError("information packets must be pushed in sequence")
        if not self._newest:
            self._oldest = pkt.seq
        n = len(pkt.payload)
        cap, width = self._ring.shape
        if pkt.seq - self._oldest + 1 > cap or n > width:
            self._grow(pkt.seq - self._oldest + 1, n)
            cap = self._ring.shape[0]
        row = self._ring[pkt.seq % cap]
        row[:n] = np.frombuffer(pkt.payload, dtype=np.uint8)
        row[n:] = 0
        self._len[pkt.seq % cap] = n
        self._newest = pkt.seq

    def ack(self, frontier: int) -> None:
        if frontier <= self.acked:
            return
        self.acked = frontier
        self._oldest = max(self._oldest, min(frontier + 1, self._newest + 1))

    @property
    def newest(self) -> int:
        return self._newest if self._newest else self.acked

    def payload(self, seq: int) -> bytes:
        if not self._oldest <= seq <= self._newest:
            raise KeyError(seq)
        cap = self._ring.shape[0]
        return self._ring[seq % cap, : self._len[seq % cap]].tobytes()

    def coded(self, upto: int | None = None) -> CodedPacket | None:
        """Next coded packet over the unacknowledged packets up to ``upto``.

        The window ends at the newest packet and reaches back at most
        ``max_window`` packets, never below the acknowledged frontier.
        """
        hi = self.newest if upto is None else min(upto, self.newest)
        lo = max(self.acked + 1, hi - self.max_window + 1, self._oldest)
        if hi < lo:
            return None
        cap = self._ring.shape[0]
        a, b = lo % cap, hi % cap
        if a <= b:
            rows, lens = self._ring[a : b + 1], self._len[a : b + 1]
        else:
            idx = np.arange(lo, hi + 1) % cap
            rows, lens = self._ring[idx], self._len[idx]
        width = int(lens.max())
        seed = int(self.rng.integers(0, 2**63))
        coeffs = coeffs_from_seed(seed, hi - lo + 1)
        out = np.empty(self._ring.shape[1], dtype=np.uint8)
        kernels.gf_combine(np.frombuffer(coeffs, dtype=np.uint8), rows, out)
        self.coded_sent += 1
        return CodedPacket(self.coded_sent, lo, hi, coeffs, out[:width].tobytes(), seed)


@dataclass
class IngestResult:
    rank_delta: int
    delivered: list[InfoPacket] = field(default_factory=list)
    stale: bool = False


class Decoder:
    """On-the-fly Gaussian elimination with in-order release.

    State: ``frontier`` (highest seq delivered in order), the payloads known
    above it, and partial rows kept in reduced row-echelon form over the
    still-unknown sequence numbers.  Payloads live in a ring store indexed by
    sequence number; delivered ones stay readable for ``history`` sequence
    numbers so coded packets built from a stale acknowledgement can still be
    reduced.  Older references are reported as stale.

    Packets recovered from coded rows come back zero-padded to the longest
    payload that took part in their row.
    """

    def __init__(self, mtu: int = 1500, history: int = 4 * DEFAULT_MAX_WINDOW):
        self.mtu = mtu
        self.history = history
        self.frontier = 0
        self.rank = 0
        self.stale_count = 0
        self.known: dict[int, int] = {}  # seq -> payload length, above the frontier
        cap = 1
        while cap < 2 * history + 2 * DEFAULT_MAX_WINDOW:
            cap *= 2
        self._tag = np.full(cap, -1, dtype=np.int64)
        self._store = np.zeros((cap, mtu), dtype=np.uint8)
        # pivot seq -> [coefficients over seqs col0.., payload, payload length]
        self._rows: dict[int, list] = {}
        self._col0 = 1
        self._width = 0
        self._touched: set[int] = set()  # pivots of rows changed since the last harvest

    @property
    def pending_rows(self) -> int:
        return len(self._rows)

    @property
    def active_rank(self) -> int:
        return len(self.known) + len(self._rows)

    def payload_of(self, seq: int) -> bytes | None:
        """Payload of a known or recently delivered packet."""
        slot = seq & (self._tag.shape[0] - 1)
        if self._tag[slot] != seq:
            return None
        length = self.known.get(seq, self.mtu)
        return self._store[slot, :length].tobytes()

    def ingest(self, pkt: InfoPacket | CodedPacket) -> IngestResult:
        if isinstance(pkt, InfoPacket):
            return self._ingest_info(pkt)
        return self._ingest_coded(pkt)

    def _ingest_info(self, pkt: InfoPacket) -> IngestResult:
        seq = pkt.seq
        if seq <= self.frontier or seq in self.known:
            return IngestResult(0)
        if pkt.length > self.mtu:
            raise CodecError(f"payload of {pkt.length} bytes exceeds mtu {self.mtu}")
        self.rank += 1
        buf = self._slot_buffer(seq)
        n = len(pkt.payload)
        buf[:n] = np.frombuffer(pkt.payload, dtype=np.uint8)
        buf[n:] = 0
        if not self._rows and seq == self.frontier + 1 and not self.known:
            # in-order arrival with nothing pending
            self.frontier = seq
            self._rebase()
            return IngestResult(1, [pkt])
        self._learn(seq, buf, n)
        self._harvest()
        return IngestResult(1, self._release())

    def _ingest_coded(self, pkt: CodedPacket) -> IngestResult:
        lo, hi = pkt.window_lo, pkt.window_hi
        if hi <= self.frontier:
            return IngestResult(0)
        if len(pkt.payload) > self.mtu:
            raise CodecError(f"payload of {len(pkt.payload)} bytes exceeds mtu {self.mtu}")
        self._ensure_cols(hi)
        pay = np.zeros(self.mtu, dtype=np.uint8)
        length = len(pkt.payload)
        pay[:length] = np.frombuffer(pkt.payload, dtype=np.uint8)
        coef = np.zeros(self._width, dtype=np.uint8)
        unknown = kernels.reduce_window(np.frombuffer(pkt.coeffs, dtype=np.uint8), lo, self._tag,
                                        self._store, self.frontier, self.history, pay, coef, self._col0)
        if unknown < 0:
            self.stale_count += 1
            return IngestResult(0, stale=True)
        if unknown == 0:
            return IngestResult(0)
        # RREF rows are zero on every other pivot column, so one pass suffices
        for piv, row in self._rows.items():
            c = coef.item(piv - self._col0)
            if c:
                kernels.gf_axpy(coef, row[0], c)
                kernels.gf_axpy(pay, row[1], c)
                if row[2] > length:
                    length = row[2]
        nzc = np.flatnonzero(coef)
        if nzc.size == 0:
            return IngestResult(0)
        self.rank += 1
        self._insert(coef, pay, length, int(nzc[0]))
        self._harvest()
        return IngestResult(1, self._release())

    def _slot_buffer(self, seq: int) -> np.ndarray:
        """Claim the ring slot of ``seq``, growing the ring on a live collision."""
        mask = self._tag.shape[0] - 1
        prev = self._tag[seq & mask]
        while prev > self.frontier and prev != seq:
            self._grow()
            mask = self._tag.shape[0] - 1
            prev = self._tag[seq & mask]
        self._tag[seq & mask] = seq
        return self._store[seq & mask]

    def _grow(self) -> None:
        cap = 2 * self._tag.shape[0]
        tag = np.full(cap, -1, dtype=np.int64)
        store = np.zeros((cap, self.mtu), dtype=np.uint8)
        live = np.flatnonzero(self._tag >= 0)
        seqs = self._tag[live]
        tag[seqs & (cap - 1)] = seqs
        store[seqs & (cap - 1)] = self._store[live]
        self._tag, self._store = tag, store

    def _ensure_cols(self, hi: int) -> None:
        need = hi - self._col0 + 1
        if need <= self._width:
            return
        width = max(need, 2 * self._width, 64)
        for row in self._rows.values():
            grown = np.zeros(width, dtype=np.uint8)
            grown[: self._width] = row[0]
            row[0] = grown
        self._width = width

    def _rebase(self) -> None:
        shift = self.frontier + 1 - self._col0
        if shift < max(64, self._width // 2):
            return
        for row in self._rows.values():
            moved = np.zeros(self._width, dtype=np.uint8)
            moved[: self._width - shift] = row[0][shift:]
            row[0] = moved
        self._col0 += shift

    def _learn(self, seq: int, payload: np.ndarray, length: int) -> None:
        """Make ``seq`` known and eliminate its column from the partial rows."""
        self.known[seq] = length
        col = seq - self._col0
        if col >= self._width:
            return
        orphan = None
        for piv, row in self._rows.items():
            c = row[0].item(col)
            if c:
                row[0][col] = 0
                kernels.gf_axpy(row[1], payload, c)
                if length > row[2]:
                    row[2] = length
                self._touched.add(piv)
                if piv == seq:
                    orphan = row
        if orphan is not None:
            # the row lost its pivot; it still holds >= 1 unknown column
            del self._rows[seq]
            self._touched.discard(seq)
            coef, pay, rlen = orphan
            self._insert(coef, pay, rlen, int(np.flatnonzero(coef)[0]))

    def _insert(self, coef: np.ndarray, pay: np.ndarray, length: int, col: int) -> None:
        """Add a reduced row with pivot at ``col`` and restore RREF."""
        inv = int(INV[coef[col]])
        kernels.gf_scale(coef, inv)
        kernels.gf_scale(pay, inv)
        for piv, row in self._rows.items():
            c = row[0].item(col)
            if c:
                kernels.gf_axpy(row[0], coef, c)
                kernels.gf_axpy(row[1], pay, c)
                if length > row[2]:
                    row[2] = length
                self._touched.add(piv)
        piv = self._col0 + col
        self._rows[piv] = [coef, pay, length]
        self._touched.add(piv)

    def _harvest(self) -> None:
        # a row with one nonzero is a solved packet; RREF keeps its column
        # out of every other row, so no further elimination is needed
        touched, self._touched = self._touched, set()
        done = [p for p in sorted(touched) if p in self._rows and np.count_nonzero(self._rows[p][0]) == 1]
        for piv in done:
            _, pay, length = self._rows.pop(piv)
            self._slot_buffer(piv)[:] = pay
            self.known[piv] = length

    def _release(self) -> list[InfoPacket]:
        out = []
        mask = self._tag.shape[0] - 1
        while self.frontier + 1 in self.known:
            seq = self.frontier + 1
            length = self.known.pop(seq)
            self.frontier = seq
            out.append(InfoPacket(seq, self._store[seq & mask, :length].tobytes()))
        if out:
            self._rebase()
        return out


def decoder_ingest(state: Decoder, pkt: InfoPacket | CodedPacket) -> tuple[int, list[InfoPacket]]:
    res = state.ingest(pkt)
    return res.rank_delta, res.delivered


# --- wire form -------------------------------------------------------------

def pack(pkt: InfoPacket | CodedPacket) -> bytes:
    """Little-endian header followed by the payload bytes."""
    if isinstance(pkt, InfoPacket):
        header = _HEADER.pack(KIND_INFO, pkt.seq, pkt.seq, pkt.seq, 0, pkt.length)
    else:
        if pkt.rng_seed is None:
            raise CodecError("coded packets need a coefficient seed to go on the wire")
        header = _HEADER.pack(KIND_CODED, pkt.coded_index, pkt.window_lo, pkt.window_hi,
                              pkt.rng_seed, len(pkt.payload))
    return header + pkt.payload


def unpack(data: bytes) -> InfoPacket | CodedPacket:
    if len(data) < HEADER_SIZE:
        raise CodecError("truncated header")
    kind, index, lo, hi, seed, length = _HEADER.unpack_from(data)
    payload = bytes(data[HEADER_SIZE : HEADER_SIZE + length])
    if len(payload) != length:
        raise CodecError("truncated payload")
    if kind == KIND_INFO:
        return InfoPacket(index, payload)
    if kind == KIND_CODED:
        if hi < lo:
            raise CodecError("empty coding window")
        return CodedPacket(index, lo, hi, coeffs_from_seed(seed, hi - lo + 1), payload, seed)
    raise CodecError(f"unknown packet kind {kind}")


def iter_packets(stream: Iterable[bytes]):
    for raw in stream:
        yield unpack(raw)
