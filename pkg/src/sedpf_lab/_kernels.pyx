# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: GF(256) row operations and the S-process walk."""

import numpy as np
cimport numpy as cnp

from .gf import MUL as _MUL_PY

cnp.import_array()

cdef unsigned char[:, ::1] _MUL = np.array(_MUL_PY, dtype=np.uint8, copy=True, order="C")


def gf_axpy(unsigned char[::1] dst, const unsigned char[::1] src, int c):
    cdef Py_ssize_t i, n = src.shape[0]
    cdef unsigned char[::1] row
    if c == 0:
        return
    if c == 1:
        for i in range(n):
            dst[i] ^= src[i]
        return
    row = _MUL[c]
    for i in range(n):
        dst[i] ^= row[src[i]]


def gf_scale(unsigned char[::1] dst, int c):
    cdef Py_ssize_t i, n = dst.shape[0]
    cdef unsigned char[::1] row
    if c == 1:
        return
    row = _MUL[c]
    for i in range(n):
        dst[i] = row[dst[i]]


def gf_gather_axpy(unsigned char[::1] dst, const unsigned char[::1] coeffs,
                   const unsigned char[:, ::1] table, const cnp.int64_t[::1] index):
    cdef Py_ssize_t i, j, m = coeffs.shape[0], n = dst.shape[0]
    cdef unsigned char c
    cdef unsigned char[::1] row
    for i in range(m):
        c = coeffs[i]
        if c == 0:
            continue
        row = _MUL[c]
        for j in range(n):
            dst[j] ^= row[table[index[i], j]]


def reduce_window(const unsigned char[::1] coeffs, long long lo, const cnp.int64_t[::1] tag,
                  const unsigned char[:, ::1] store, long long frontier, long long history,
                  unsigned char[::1] pay, unsigned char[::1] coef, long long col0):
    cdef Py_ssize_t i, j, m = coeffs.shape[0], n = pay.shape[0]
    cdef long long seq, mask = tag.shape[0] - 1, slot
    cdef unsigned char c
    cdef unsigned char[::1] row
    cdef Py_ssize_t unknown = 0
    for i in range(m):
        c = coeffs[i]
        if c == 0:
            continue
        seq = lo + i
        slot = seq & mask
        if tag[slot] == seq:
            if seq <= frontier - history:
                return -1
            row = _MUL[c]
            for j in range(n):
                pay[j] ^= row[store[slot, j]]
        elif seq <= frontier:
            return -1
        else:
            coef[seq - col0] = c
            unknown += 1
    return unknown


def gf_combine(const unsigned char[::1] coeffs, const unsigned char[:, ::1] rows,
               unsigned char[::1] out):
    cdef Py_ssize_t i, j, m = coeffs.shape[0], n = out.shape[0]
    cdef unsigned char c
    cdef unsigned char[::1] row
    for j in range(n):
        out[j] = 0
    for i in range(m):
        c = coeffs[i]
        if c == 0:
            continue
        row = _MUL[c]
        for j in range(n):
            out[j] ^= row[rows[i, j]]


def s_walk(info_err, coded_ok, cnp.int64_t[::1] counts):
    cdef const cnp.int64_t[::1] err = np.ascontiguousarray(info_err, dtype=np.int64)
    cdef const cnp.int64_t[::1] ok = np.ascontiguousarray(coded_ok, dtype=np.int64)
    cdef Py_ssize_t n = err.shape[0], nbins = counts.shape[0], i
    cdef Py_ssize_t start = 0, periods = 0, used = 0
    cdef long long deficit = 0, length
    cdef bint busy = False
    for i in range(n):
        if not busy:
            start = i
            if err[i] == 0:
                counts[0] += 1
                periods += 1
                used = i + 1
                continue
            busy = True
        deficit += err[i] - ok[i]
        if deficit <= 0:
            deficit = 0
            busy = False
            length = i - start + 1
            if length >= nbins:
                length = nbins - 1
            counts[length] += 1
            periods += 1
            used = i + 1
    return periods, used, deficit
