# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled softmax-policy kernels; ``_kernels_py`` holds the reference version."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def log_softmax_scores(double[:, ::1] feats, double[::1] weights):
    cdef Py_ssize_t k = feats.shape[0], d = feats.shape[1], a, j
    out_arr = np.empty(k)
    cdef double[::1] out = out_arr
    cdef double s, top = -1e308, z = 0.0
    for a in range(k):
        s = 0.0
        for j in range(d):
            s += feats[a, j] * weights[j]
        out[a] = s
        if s > top:
            top = s
    for a in range(k):
        z += exp(out[a] - top)
    z = log(z)
    for a in range(k):
        out[a] = out[a] - top - z
    return out_arr


def segment_replay(double[:, ::1] feats, cnp.int64_t[::1] offsets, cnp.int64_t[::1] chosen, double[::1] weights):
    cdef Py_ssize_t n = offsets.shape[0] - 1, d = feats.shape[1]
    cdef Py_ssize_t i, a, j, lo, hi, c
    logp_arr = np.empty(n)
    grad_arr = np.empty((n, d))
    scores_arr = np.empty(feats.shape[0])
    cdef double[::1] logp = logp_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double[::1] scores = scores_arr
    cdef double s, top, z, p
    for a in range(feats.shape[0]):
        s = 0.0
        for j in range(d):
            s += feats[a, j] * weights[j]
        scores[a] = s
    for i in range(n):
        lo = offsets[i]
        hi = offsets[i + 1]
        c = lo + chosen[i]
        top = -1e308
        for a in range(lo, hi):
            if scores[a] > top:
                top = scores[a]
        z = 0.0
        for a in range(lo, hi):
            z += exp(scores[a] - top)
        logp[i] = scores[c] - top - log(z)
        for j in range(d):
            grad[i, j] = feats[c, j]
        for a in range(lo, hi):
            p = exp(scores[a] - top) / z
            for j in range(d):
                grad[i, j] -= p * feats[a, j]
    return logp_arr, grad_arr
