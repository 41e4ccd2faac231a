"""Pure numpy/BLAS implementations of the hot kernels.

Distance kernels compute candidate sets with the expanded-square matmul trick
(fast, but rounding-noisy) and then recompute the candidates' distances with
the direct formula, so returned values match an exhaustive double loop.
"""

from __future__ import annotations

import numpy as np


def min_dists(queries, refs, chunk_rows=256):
    """Exact min Euclidean distance from each query row to any reference row."""
    Q = np.ascontiguousarray(queries, dtype=np.float64)
    R = np.ascontiguousarray(refs, dtype=np.float64)
    m, d = Q.shape
    n = R.shape[0]
    sq_q = np.einsum("ij,ij->i", Q, Q)
    sq_r = np.einsum("ij,ij->i", R, R)
    n_cand = min(4, n)
    out = np.empty(m, dtype=np.float64)
    for lo in range(0, m, chunk_rows):
        hi = min(lo + chunk_rows, m)
        d2 = sq_q[lo:hi, None] + sq_r[None, :] - 2.0 * (Q[lo:hi] @ R.T)
        if n_cand < n:
            cand = np.argpartition(d2, n_cand - 1, axis=1)[:, :n_cand]
        else:
            cand = np.broadcast_to(np.arange(n), (hi - lo, n))
        diffs = R[cand] - Q[lo:hi, None, :]
        exact = np.einsum("ijk,ijk->ij", diffs, diffs)
        out[lo:hi] = np.sqrt(np.maximum(exact.min(axis=1), 0.0))
    return out


def knn_all(X, k, chunk_rows=256):
    """Indices of the k nearest neighbors of every row of X (self excluded),
    each row sorted ascending by (distance, index). Exact search."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    sq = np.einsum("ij,ij->i", X, X)
    pad = min(k + 8, n - 1)
    out = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, chunk_rows):
        hi = min(lo + chunk_rows, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (X[lo:hi] @ X.T)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        if pad < n - 1:
            cand = np.argpartition(d2, pad - 1, axis=1)[:, :pad]
        else:
            cand = np.argsort(d2, axis=1, kind="stable")[:, : n - 1]
        diffs = X[cand] - X[lo:hi, None, :]
        exact = np.einsum("ijk,ijk->ij", diffs, diffs)
        order = np.lexsort((cand, exact))
        out[lo:hi] = np.take_along_axis(cand, order[:, :k], axis=1)
    return out


def knn_of_row(X, row, k):
    """Exact k nearest neighbors of X[row] by direct distance evaluation."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 0 <= row < n:
        raise IndexError(f"row {row} out of range for {n} rows")
    if not 1 <= k < n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    diff = X - X[row]
    d2 = np.einsum("ij,ij->i", diff, diff)
    d2[row] = np.inf
    order = np.lexsort((np.arange(n), d2))
    return order[:k]


def best_splits(X, presort, res, row_node, n_nodes, node_sum, node_cnt, min_leaf):
    """Best variance-reduction split per active tree node, one tree level.

    Candidate thresholds are midpoints between consecutive distinct values
    within a node; midpoints that round onto a neighbor are skipped so the
    value-based routing agrees with the scan. Ties in gain resolve to the
    lowest feature index, then the lowest threshold.
    """
    n, d = X.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int32)
    best_thr = np.full(n_nodes, np.nan)
    for j in range(d):
        nd = row_node[presort[:, j]]
        keep = nd >= 0
        rows = presort[:, j][keep]
        nds = nd[keep]
        m = rows.size
        if m < 2:
            continue
        order = np.argsort(nds, kind="stable")
        rows = rows[order]
        nds = nds[order]
        v = X[rows, j]
        g = res[rows]
        start_mask = np.empty(m, dtype=bool)
        start_mask[0] = True
        start_mask[1:] = nds[1:] != nds[:-1]
        starts = np.flatnonzero(start_mask)
        seg_id = np.cumsum(start_mask) - 1
        cs = np.cumsum(g)
        seg_base = np.where(starts > 0, cs[np.maximum(starts - 1, 0)], 0.0)

        p_seg = seg_id[:-1]
        same = p_seg == seg_id[1:]
        mid = 0.5 * (v[:-1] + v[1:])
        gap = (mid > v[:-1]) & (mid < v[1:])
        cnt_l = np.arange(m - 1) - starts[p_seg] + 1
        sum_l = cs[:-1] - seg_base[p_seg]
        tot_c = node_cnt[nds[:-1]]
        tot_s = node_sum[nds[:-1]]
        cnt_r = tot_c - cnt_l
        ok = same & gap & (cnt_l >= min_leaf) & (cnt_r >= min_leaf)
        safe_r = np.maximum(cnt_r, 1)
        gain = sum_l * sum_l / cnt_l + (tot_s - sum_l) ** 2 / safe_r - tot_s * tot_s / tot_c
        gain = np.where(ok, gain, -np.inf)

        r_starts = np.minimum(starts, m - 2)
        seg_max = np.maximum.reduceat(gain, r_starts)
        seg_max[starts > m - 2] = -np.inf
        winners = np.flatnonzero(np.isfinite(gain) & (gain == seg_max[p_seg]))
        if winners.size == 0:
            continue
        win_seg, first = np.unique(p_seg[winners], return_index=True)
        pos = winners[first]
        nodes = nds[starts[win_seg]]
        # require a relative margin so mathematically tied gains (identical
        # partitions reachable through several features) keep the lowest
        # feature index regardless of summation-order noise
        upd = seg_max[win_seg] > best_gain[nodes] * (1.0 + 1e-12)
        nodes = nodes[upd]
        best_gain[nodes] = seg_max[win_seg][upd]
        best_thr[nodes] = mid[pos][upd]
        best_feat[nodes] = j
    return best_gain, best_feat, best_thr
