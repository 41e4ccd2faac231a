import numpy as np
import pytest

from workload_forge import smote
from workload_forge.preprocess import TableEncoder


def brute_force_knn(X, i, k):
    d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
    d[i] = np.inf
    return np.lexsort((np.arange(len(X)), d))[:k]


def test_fit_row_count_boundary(rng):
    X = rng.random((6, 3))
    assert smote.fit(X, k=5).k == 5
    with pytest.raises(smote.SmoteError):
        smote.fit(rng.random((5, 3)), k=5)


def test_fit_deterministic(rng):
    X = rng.random((40, 4))
    a = smote.fit(X, k=5)
    b = smote.fit(X, k=5)
    assert np.array_equal(a.neighbors, b.neighbors)


def test_knn_simple_1d():
    model = smote.SmoteModel(np.array([[0.0], [1.0], [3.0]]), k=2)
    assert model.knn(0).tolist() == [1, 2]
    assert model.knn(2).tolist() == [1, 0]


def test_knn_duplicate_is_first_neighbor():
    X = np.array([[1.0, 2.0], [5.0, 5.0], [1.0, 2.0], [9.0, 0.0]])
    model = smote.SmoteModel(X, k=2)
    assert model.knn(0).tolist()[0] == 2
    assert model.knn(2).tolist()[0] == 0


def test_knn_matches_exhaustive_search(rng):
    X = rng.standard_normal((200, 10))
    model = smote.fit(X, k=5)
    for i in range(0, 200, 7):
        assert model.knn(i).tolist() == brute_force_knn(X, i, 5).tolist()
    # arbitrary k through the query path
    for i in (0, 13, 199):
        assert model.knn(i, k=9).tolist() == brute_force_knn(X, i, 9).tolist()


def test_knn_index_out_of_range(rng):
    model = smote.fit(rng.random((10, 2)), k=3)
    with pytest.raises(IndexError):
        model.knn(10)


def test_sample_identical_rows():
    X = np.tile([[2.0, -1.0, 0.5]], (2, 1))
    model = smote.fit(X, k=1)
    s = model.sample(50, seed=0)
    assert np.allclose(s.data, X[0], atol=0, rtol=0)


def test_sample_lies_on_segment():
    a = np.array([0.0, 0.0, 1.0, 0.0])
    b = np.array([1.0, 2.0, 0.0, 1.0])
    model = smote.fit(np.stack([a, b]), k=1)
    s = model.sample(1000, seed=1).data
    ab = b - a
    t = (s - a) @ ab / (ab @ ab)
    assert np.all((t >= -1e-12) & (t <= 1 + 1e-12))
    off = s - (a + t[:, None] * ab)
    assert np.max(np.sqrt((off ** 2).sum(axis=1))) < 1e-12


def test_sample_convexity_bounds_and_onehot_mass(mock_table_3k):
    enc = TableEncoder.fit(mock_table_3k)
    em = enc.encode(mock_table_3k)
    model = smote.fit(em, k=5)
    s = model.sample(4000, seed=9).data
    assert np.all(s.min(axis=0) >= em.data.min(axis=0) - 1e-12)
    assert np.all(s.max(axis=0) <= em.data.max(axis=0) + 1e-12)
    for blk in enc.layout.categorical:
        sums = s[:, blk.offset:blk.offset + blk.width].sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-12)
    dec = enc.decode(model.sample(100, seed=2))
    for f in dec.categorical_features:
        vocab = set(enc.onehots[f.name].vocabulary)
        assert set(dec[f.name]) <= vocab


def test_sample_deterministic(rng):
    model = smote.fit(rng.random((30, 5)), k=5)
    s1 = model.sample(64, seed=77).data
    s2 = model.sample(64, seed=77).data
    assert np.array_equal(s1, s2)
    assert not np.array_equal(s1, model.sample(64, seed=78).data)


def test_matrix_file_round_trip(tmp_path, rng):
    X = rng.standard_normal((17, 6))
    path = tmp_path / "m.smte"
    smote.save_matrix(X, path)
    assert path.stat().st_size == 16 + 17 * 6 * 8
    back = smote.load_matrix(path)
    assert np.array_equal(back, X)


def test_matrix_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.smte"
    path.write_bytes(b"NOPE" + b"\x00" * 24)
    with pytest.raises(smote.SmoteError, match="magic"):
        smote.load_matrix(path)


def test_model_save_load_round_trip(tmp_path, rng):
    X = rng.random((25, 4))
    model = smote.fit(X, k=3)
    smote.save(model, tmp_path / "m.smte", tmp_path / "model.json", tmp_path / "enc.json")
    back = smote.load(tmp_path / "model.json")
    assert back.k == 3
    assert np.array_equal(back.matrix, model.matrix)
    assert np.array_equal(back.sample(10, 5).data, model.sample(10, 5).data)
