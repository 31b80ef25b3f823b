# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: embedding-gradient scatter-add and BM25 postings
accumulation. Signatures mirror factqa._kernels._ref exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scatter_add_rows(double[:, ::1] out, cnp.int64_t[::1] idx, double[:, ::1] rows):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t h = out.shape[1]
    cdef Py_ssize_t k, j
    cdef cnp.int64_t r
    for k in range(n):
        r = idx[k]
        for j in range(h):
            out[r, j] += rows[k, j]


def accumulate_postings(
    double[::1] scores,
    cnp.int64_t[::1] term_ids,
    double[::1] term_weights,
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] post_docs,
    double[::1] post_weights,
):
    cdef Py_ssize_t n_terms = term_ids.shape[0]
    cdef Py_ssize_t i
    cdef cnp.int64_t t, p, lo, hi
    cdef double qw
    for i in range(n_terms):
        t = term_ids[i]
        qw = term_weights[i]
        lo = indptr[t]
        hi = indptr[t + 1]
        for p in range(lo, hi):
            scores[post_docs[p]] += qw * post_weights[p]
