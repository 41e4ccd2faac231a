import numpy as np
import pytest

from workload_forge._kernels import _py

try:
    from workload_forge._kernels import _ck
except ImportError:
    _ck = None

needs_ext = pytest.mark.skipif(_ck is None, reason="compiled extension not built")


def double_loop_min_dists(Q, R):
    out = np.empty(Q.shape[0])
    for i in range(Q.shape[0]):
        out[i] = np.sqrt(((R - Q[i]) ** 2).sum(axis=1)).min()
    return out


def reference_best_splits(X, res, row_node, n_nodes, node_sum, node_cnt, min_leaf):
    """Slow per-node exhaustive split search with the same tie rules."""
    n, d = X.shape
    best = [(-np.inf, -1, np.nan)] * n_nodes
    for nd in range(n_nodes):
        rows = np.flatnonzero(row_node == nd)
        if rows.size < 2:
            continue
        tot_s, tot_c = node_sum[nd], node_cnt[nd]
        for j in range(d):
            order = rows[np.argsort(X[rows, j], kind="stable")]
            v = X[order, j]
            g = res[order]
            run = 0.0
            for p in range(rows.size - 1):
                run += g[p]
                mid = 0.5 * (v[p] + v[p + 1])
                if not (v[p] < mid < v[p + 1]):
                    continue
                cl, cr = p + 1, tot_c - (p + 1)
                if cl < min_leaf or cr < min_leaf:
                    continue
                gain = run * run / cl + (tot_s - run) ** 2 / cr - tot_s * tot_s / tot_c
                if gain > best[nd][0] * (1.0 + 1e-12):
                    best[nd] = (gain, j, mid)
    g = np.array([b[0] for b in best])
    f = np.array([b[1] for b in best], dtype=np.int32)
    t = np.array([b[2] for b in best])
    return g, f, t


def _split_inputs(rng, n=60, d=4, n_nodes=3):
    X = np.ascontiguousarray(np.round(rng.standard_normal((n, d)), 3))
    res = rng.standard_normal(n)
    row_node = rng.integers(-1, n_nodes, n).astype(np.int32)
    presort = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").astype(np.int32))
    cnt = np.array([(row_node == i).sum() for i in range(n_nodes)], dtype=np.int64)
    sm = np.array([res[row_node == i].sum() for i in range(n_nodes)])
    return X, presort, res, row_node, n_nodes, sm, cnt


def test_py_best_splits_matches_reference():
    rng = np.random.default_rng(0)
    for trial in range(10):
        X, presort, res, row_node, n_nodes, sm, cnt = _split_inputs(rng)
        got = _py.best_splits(X, presort, res, row_node, n_nodes, sm, cnt, 1)
        want = reference_best_splits(X, res, row_node, n_nodes, sm, cnt, 1)
        assert np.array_equal(got[1], want[1])
        valid = got[1] >= 0
        assert np.allclose(got[0][valid], want[0][valid], rtol=1e-9)
        assert np.array_equal(got[2][valid], want[2][valid])


@needs_ext
def test_ck_best_splits_matches_py():
    rng = np.random.default_rng(1)
    for trial in range(10):
        X, presort, res, row_node, n_nodes, sm, cnt = _split_inputs(rng, n=200, d=6)
        a = _py.best_splits(X, presort, res, row_node, n_nodes, sm, cnt, 2)
        b = _ck.best_splits(X, presort, res, row_node, n_nodes, sm, cnt, 2)
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[2][a[1] >= 0], b[2][b[1] >= 0])


def test_py_min_dists_matches_double_loop():
    rng = np.random.default_rng(2)
    Q = rng.standard_normal((37, 8))
    R = rng.standard_normal((91, 8))
    assert np.allclose(_py.min_dists(Q, R), double_loop_min_dists(Q, R), atol=1e-12)


def test_py_min_dists_identity_exact_zero():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((50, 6)) * 100
    assert np.all(_py.min_dists(X, X) == 0.0)


@needs_ext
def test_ck_min_dists_matches_py():
    rng = np.random.default_rng(4)
    Q = rng.standard_normal((23, 5))
    R = rng.standard_normal((77, 5))
    assert np.allclose(_ck.min_dists(Q, R), _py.min_dists(Q, R), atol=1e-12)
    X = rng.standard_normal((40, 5))
    assert np.all(_ck.min_dists(X, X) == 0.0)


def test_py_knn_all_matches_brute_force():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((120, 7))
    got = _py.knn_all(X, 6)
    for i in range(120):
        d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        d[i] = np.inf
        want = np.lexsort((np.arange(120), d))[:6]
        assert got[i].tolist() == want.tolist()


@needs_ext
def test_ck_knn_all_matches_py():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((150, 6))
    assert np.array_equal(_ck.knn_all(X, 5), _py.knn_all(X, 5))


def test_knn_small_pad_edge():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((7, 3))
    got = _py.knn_all(X, 5)  # pad exceeds n-1
    for i in range(7):
        d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        d[i] = np.inf
        assert got[i].tolist() == np.lexsort((np.arange(7), d))[:5].tolist()
