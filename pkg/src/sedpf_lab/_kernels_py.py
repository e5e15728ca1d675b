"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` extension; used
when the extension is not built or ``SEDPF_LAB_PURE=1`` is set.
"""

import numpy as np

from .gf import MUL


def gf_axpy(dst, src, c):
    """In place ``dst ^= c * src`` over GF(256); ``len(src) <= len(dst)``."""
    if c == 0:
        return
    n = src.shape[0]
    if c == 1:
        np.bitwise_xor(dst[:n], src, out=dst[:n])
    else:
        np.bitwise_xor(dst[:n], MUL[c][src], out=dst[:n])


def gf_scale(dst, c):
    """In place ``dst = c * dst``."""
    if c != 1:
        dst[:] = MUL[c][dst]


def gf_gather_axpy(dst, coeffs, table, index):
    """In place ``dst ^= XOR_i coeffs[i] * table[index[i]]``."""
    if coeffs.shape[0]:
        np.bitwise_xor(dst, np.bitwise_xor.reduce(MUL[coeffs[:, None], table[index]], axis=0), out=dst)


def reduce_window(coeffs, lo, tag, store, frontier, history, pay, coef, col0):
    """Split a coded row over window ``lo..`` into known and unknown columns.

    Known payloads (ring ``store`` addressed by ``seq & mask`` and checked
    against ``tag``) are subtracted from ``pay``; coefficients of unknown
    sequences land in ``coef`` at ``seq - col0``.  Returns the number of
    unknown columns, or -1 when the row references a pruned sequence.
    """
    seqs = np.arange(lo, lo + coeffs.shape[0], dtype=np.int64)
    slots = seqs & (tag.shape[0] - 1)
    nz = coeffs != 0
    have = tag[slots] == seqs
    if np.any(nz & (seqs <= frontier) & (~have | (seqs <= frontier - history))):
        return -1
    use = nz & have
    gf_gather_axpy(pay, coeffs[use], store, slots[use])
    unknown = nz & ~have
    coef[seqs[unknown] - col0] = coeffs[unknown]
    return int(np.count_nonzero(unknown))


def gf_combine(coeffs, rows, out):
    """``out = XOR_i coeffs[i] * rows[i]`` for a 2-D uint8 ``rows``."""
    out[:] = 0
    for i in range(coeffs.shape[0]):
        c = coeffs[i]
        if c:
            np.bitwise_xor(out, MUL[c][rows[i]], out=out)


def s_walk(info_err, coded_ok, counts):
    """Replay decoding periods over a run of frames.

    ``info_err[n]`` is the number of erased information packets in frame n and
    ``coded_ok[n]`` whether its coded packet arrived.  The decoder deficit
    follows ``d_n = max(0, d_{n-1} + info_err[n] - coded_ok[n])``; a period
    opens at every frame entered with zero deficit.  Completed period lengths
    ``S`` are tallied into ``counts`` (``counts[k] += 1``, overflow clipped to
    the last bin).  Returns ``(periods, frames_used, final_deficit)`` where
    frames after the last completed period are not consumed.
    """
    inc = info_err.astype(np.int64) - coded_ok.astype(np.int64)
    n = inc.shape[0]
    if n == 0:
        return 0, 0, 0
    # Lindley recursion via running minimum of the random walk
    walk = np.concatenate(([0], np.cumsum(inc)))
    deficit = walk - np.minimum.accumulate(walk)
    d_prev = deficit[:-1]
    d_now = deficit[1:]
    starts = np.flatnonzero(d_prev == 0)
    ends = np.flatnonzero(d_now == 0)
    if ends.size == 0:
        return 0, 0, int(deficit[-1])
    last_end = ends[-1]
    starts = starts[starts <= last_end]
    # each start's period ends at the first zero-deficit frame at or after it
    end_of = ends[np.searchsorted(ends, starts)]
    lengths = end_of - starts + 1
    # a frame with no information erasure is an S=0 period
    lengths[info_err[starts] == 0] = 0
    nbins = counts.shape[0]
    np.add.at(counts, np.minimum(lengths, nbins - 1), 1)
    return int(starts.size), int(last_end + 1), int(deficit[-1])
