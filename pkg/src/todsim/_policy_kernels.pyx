# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled policy kernels: softmax over sparse binary features, inverse-CDF
sampling, and REINFORCE gradient accumulation. Mirrors _policy_kernels_py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND = "compiled"


def softmax_probs(double[:, ::1] weights, cnp.int64_t[::1] feature_idx):
    cdef Py_ssize_t n_tokens = weights.shape[0]
    cdef Py_ssize_t n_feats = feature_idx.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n_tokens, dtype=np.float64)
    cdef double[::1] probs = out
    cdef Py_ssize_t i, j
    cdef double logit, mx, total

    mx = -1e300
    for i in range(n_tokens):
        logit = 0.0
        for j in range(n_feats):
            logit += weights[i, feature_idx[j]]
        probs[i] = logit
        if logit > mx:
            mx = logit
    total = 0.0
    for i in range(n_tokens):
        probs[i] = exp(probs[i] - mx)
        total += probs[i]
    for i in range(n_tokens):
        probs[i] /= total
    return out


def sample_index(double[::1] probs, double u):
    cdef Py_ssize_t last = probs.shape[0] - 1
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(last):
        acc += probs[i]
        if u < acc:
            return i
    return last


def accumulate_grad(double[:, ::1] grad, double[::1] probs, Py_ssize_t chosen,
                    cnp.int64_t[::1] feature_idx, double coeff):
    cdef Py_ssize_t n_tokens = grad.shape[0]
    cdef Py_ssize_t n_feats = feature_idx.shape[0]
    cdef Py_ssize_t i, j
    cdef double delta
    for i in range(n_tokens):
        delta = coeff * ((1.0 if i == chosen else 0.0) - probs[i])
        for j in range(n_feats):
            grad[i, feature_idx[j]] += delta
    return None
