# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: exact nearest-neighbor search and GBDT split search."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()


def min_dists(queries, refs):
    cdef double[:, ::1] Q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double[:, ::1] R = np.ascontiguousarray(refs, dtype=np.float64)
    cdef Py_ssize_t m = Q.shape[0], n = R.shape[0], d = Q.shape[1]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double best, s, diff
    for i in range(m):
        best = INFINITY
        for j in range(n):
            s = 0.0
            for l in range(d):
                diff = Q[i, l] - R[j, l]
                s += diff * diff
                if s >= best:
                    break
            if s < best:
                best = s
        out[i] = sqrt(best)
    return out_arr


def knn_all(X_in, Py_ssize_t k):
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    out_arr = np.empty((n, k), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cand_d_arr = np.empty(k, dtype=np.float64)
    cand_i_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] cand_d = cand_d_arr
    cdef long long[::1] cand_i = cand_i_arr
    cdef Py_ssize_t i, j, l, p, q
    cdef double worst, s, diff
    for i in range(n):
        for p in range(k):
            cand_d[p] = INFINITY
            cand_i[p] = -1
        for j in range(n):
            if j == i:
                continue
            worst = cand_d[k - 1]
            s = 0.0
            for l in range(d):
                diff = X[i, l] - X[j, l]
                s += diff * diff
                if s > worst:
                    break
            if s > worst or (s == worst and (cand_i[k - 1] != -1 and j > cand_i[k - 1])):
                continue
            # insertion by (distance, index)
            p = k - 1
            while p > 0 and (cand_d[p - 1] > s or (cand_d[p - 1] == s and cand_i[p - 1] > j)):
                cand_d[p] = cand_d[p - 1]
                cand_i[p] = cand_i[p - 1]
                p -= 1
            cand_d[p] = s
            cand_i[p] = j
        for p in range(k):
            out[i, p] = cand_i[p]
    return out_arr


def best_splits(X_in, presort_in, res_in, row_node_in, Py_ssize_t n_nodes,
                node_sum_in, node_cnt_in, Py_ssize_t min_leaf):
    cdef double[:, ::1] X = X_in
    cdef int[:, ::1] presort = presort_in
    cdef double[::1] res = res_in
    cdef int[::1] row_node = row_node_in
    cdef double[::1] node_sum = node_sum_in
    cdef long long[::1] node_cnt = node_cnt_in
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]

    gain_arr = np.full(n_nodes, -np.inf)
    feat_arr = np.full(n_nodes, -1, dtype=np.int32)
    thr_arr = np.full(n_nodes, np.nan)
    cdef double[::1] best_gain = gain_arr
    cdef int[::1] best_feat = feat_arr
    cdef double[::1] best_thr = thr_arr

    cnt_arr = np.zeros(n_nodes, dtype=np.int64)
    sum_arr = np.zeros(n_nodes, dtype=np.float64)
    prev_arr = np.zeros(n_nodes, dtype=np.float64)
    seen_arr = np.zeros(n_nodes, dtype=np.int8)
    cdef long long[::1] cnt = cnt_arr
    cdef double[::1] run_sum = sum_arr
    cdef double[::1] prev_val = prev_arr
    cdef signed char[::1] seen = seen_arr

    cdef Py_ssize_t i, j, r
    cdef int nd
    cdef double v, mid, sl, sr, gain, tot_s
    cdef long long cl, cr, tot_c
    for j in range(d):
        for i in range(n_nodes):
            cnt[i] = 0
            run_sum[i] = 0.0
            seen[i] = 0
        for i in range(n):
            r = presort[i, j]
            nd = row_node[r]
            if nd < 0:
                continue
            v = X[r, j]
            if seen[nd] and v > prev_val[nd]:
                mid = 0.5 * (prev_val[nd] + v)
                if prev_val[nd] < mid < v:
                    cl = cnt[nd]
                    tot_c = node_cnt[nd]
                    cr = tot_c - cl
                    if cl >= min_leaf and cr >= min_leaf:
                        sl = run_sum[nd]
                        tot_s = node_sum[nd]
                        sr = tot_s - sl
                        gain = sl * sl / cl + sr * sr / cr - tot_s * tot_s / tot_c
                        # relative margin keeps the lowest feature/threshold on
                        # mathematically tied gains (see _py.best_splits)
                        if gain > best_gain[nd] * (1.0 + 1e-12):
                            best_gain[nd] = gain
                            best_feat[nd] = <int> j
                            best_thr[nd] = mid
            cnt[nd] += 1
            run_sum[nd] += res[r]
            prev_val[nd] = v
            seen[nd] = 1
    return gain_arr, feat_arr, thr_arr
