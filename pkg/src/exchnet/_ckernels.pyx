# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef Py_ssize_t _kshorth(const double[::1] s, Py_ssize_t k, bint positive_only) noexcept nogil:
    cdef Py_ssize_t m = s.shape[0] - k + 1
    cdef Py_ssize_t a, best = -1
    cdef double w, bw = INFINITY
    for a in range(m):
        if positive_only and s[a] + s[a + k - 1] <= 0.0:
            continue
        w = s[a + k - 1] - s[a]
        if w < bw or best < 0:
            bw = w
            best = a
    return best


def kshorth_index(s, Py_ssize_t k, bint positive_only):
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    if sv.shape[0] - k + 1 <= 0:
        return -1
    return _kshorth(sv, k, positive_only)


def xi_moment_sums(xi):
    cdef const double[:, ::1] x = np.ascontiguousarray(xi, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double tot = 0.0, sq = 0.0, s2 = 0.0, rr = 0.0, cc = 0.0, rc = 0.0
    cdef double v
    cdef double[::1] row = np.zeros(n)
    cdef double[::1] col = np.zeros(n)
    with nogil:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                v = x[i, j]
                row[i] += v
                col[j] += v
                sq += v * v
                s2 += v * x[j, i]
        for i in range(n):
            tot += row[i]
            rr += row[i] * row[i]
            cc += col[i] * col[i]
            rc += row[i] * col[i]
    return tot, sq, s2, rr - sq, cc - sq, 2.0 * (rc - s2)


def grouped_outer_sums(u):
    cdef const double[:, :, ::1] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = U.shape[0], p = U.shape[2]
    cdef Py_ssize_t i, j, a, b
    D_ = np.zeros((p, p))
    S2_ = np.zeros((p, p))
    R_ = np.zeros((n, p))
    C_ = np.zeros((n, p))
    cdef double[:, ::1] D = D_
    cdef double[:, ::1] S2 = S2_
    cdef double[:, ::1] R = R_
    cdef double[:, ::1] C = C_
    with nogil:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for a in range(p):
                    R[i, a] += U[i, j, a]
                    C[j, a] += U[i, j, a]
                    for b in range(p):
                        D[a, b] += U[i, j, a] * U[i, j, b]
                        S2[a, b] += U[i, j, a] * U[j, i, b]
    S3 = R_.T @ R_ - D_
    S4 = C_.T @ C_ - D_
    M5 = R_.T @ C_ - S2_
    return D_, S2_, S3, S4, M5


def cv_losses(s, fold, Py_ssize_t n_folds, ks, bint positive_only):
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const long long[::1] fv = np.ascontiguousarray(fold, dtype=np.int64)
    cdef const long long[:, ::1] kv = np.ascontiguousarray(ks, dtype=np.int64)
    cdef Py_ssize_t N = sv.shape[0], nc = kv.shape[0]
    cdef Py_ssize_t f, c, i, t, nt, nh, a, k
    cdef double tm, t2, center
    out_ = np.full((nc, n_folds), np.inf)
    cdef double[:, ::1] out = out_
    train_ = np.empty(N)
    cdef double[::1] train = train_
    with nogil:
        for f in range(n_folds):
            nt = 0
            nh = 0
            tm = 0.0
            t2 = 0.0
            for i in range(N):
                if fv[i] == f:
                    nh += 1
                    tm += sv[i]
                    t2 += sv[i] * sv[i]
                else:
                    train[nt] = sv[i]
                    nt += 1
            if nh == 0:
                continue
            tm /= nh
            t2 /= nh
            for c in range(nc):
                k = kv[c, f]
                if nt - k + 1 <= 0:
                    continue
                a = _kshorth(train[:nt], k, positive_only)
                if a < 0:
                    continue
                center = 0.5 * (train[a] + train[a + k - 1])
                out[c, f] = t2 - 2.0 * center * tm + center * center
    return out_
