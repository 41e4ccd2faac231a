import numpy as np
import pytest

from workload_forge.gbdt import GbdtConfig, GbdtError, GbdtModel, fit, mse


def test_config_validation():
    with pytest.raises(GbdtError):
        GbdtConfig(learning_rate=0.0)
    with pytest.raises(GbdtError):
        GbdtConfig(learning_rate=1.5)
    with pytest.raises(GbdtError):
        GbdtConfig(max_depth=0)
    desk = GbdtConfig.desk_scale(seed=3)
    assert (desk.iterations, desk.max_depth) == (50, 6)
    assert GbdtConfig().iterations == 200 and GbdtConfig().max_depth == 10


def test_constant_target_gives_base_only():
    X = np.arange(10.0).reshape(-1, 1)
    y = np.full(10, 4.25)
    model = fit(X, y, GbdtConfig(iterations=5, max_depth=3))
    assert model.base == 4.25
    assert all(np.all(t.value == 0.0) for t in model.trees)
    assert np.all(model.predict(X) == 4.25)


def test_eight_distinct_rows_memorized():
    X = np.array([[3.0], [1.0], [7.0], [2.0], [9.0], [4.0], [8.0], [0.0]])
    y = np.array([5.0, -1.0, 2.0, 0.5, 3.25, -2.0, 7.0, 1.0])
    model = fit(X, y, GbdtConfig(iterations=1, max_depth=10))
    assert mse(model.predict(X), y) < 1e-24


def test_linear_target_fits_tightly():
    rng = np.random.default_rng(0)
    X = rng.random((300, 1))
    y = 3.0 * X[:, 0] - 1.0
    model = fit(X, y, GbdtConfig(iterations=200, max_depth=10))
    assert model.train_mse_curve[-1] < 1e-3 * y.var()


def test_zero_iterations_predicts_base():
    X = np.random.default_rng(1).random((20, 2))
    y = X.sum(axis=1)
    model = fit(X, y, GbdtConfig(iterations=0))
    assert np.all(model.predict(X) == model.base)


def test_duplicated_row_predicts_identically(rng):
    X = np.tile(rng.random((1, 3)), (6, 1))
    full = np.vstack([X, rng.random((20, 3))])
    y = rng.standard_normal(26)
    model = fit(full, y, GbdtConfig(iterations=10, max_depth=4))
    p = model.predict(full[:6])
    assert np.all(p == p[0])


def test_training_predictions_replay(rng):
    X = rng.random((200, 5))
    y = rng.standard_normal(200)
    model = fit(X, y, GbdtConfig(iterations=30, max_depth=4))
    assert np.max(np.abs(model.predict(X) - model.train_predictions)) < 1e-12


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([3.0, 3.0], [1.0, 1.0]) == 4.0
    assert mse([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(2.0 / 3.0)
    with pytest.raises(GbdtError):
        mse([1.0], [1.0, 2.0])


@pytest.mark.parametrize("lr", [1.0, 0.5, 0.1])
def test_training_mse_nonincreasing(lr, rng):
    X = rng.random((300, 4))
    y = rng.standard_normal(300)
    model = fit(X, y, GbdtConfig(iterations=50, max_depth=3, learning_rate=lr))
    curve = model.train_mse_curve
    assert all(a >= b - 1e-12 for a, b in zip(curve, curve[1:]))


def test_row_permutation_invariance(rng):
    X = rng.standard_normal((150, 4))
    y = rng.standard_normal(150)
    perm = rng.permutation(150)
    m1 = fit(X, y, GbdtConfig(iterations=15, max_depth=4))
    m2 = fit(X[perm], y[perm], GbdtConfig(iterations=15, max_depth=4))
    for t1, t2 in zip(m1.trees, m2.trees):
        assert np.array_equal(t1.feature, t2.feature)
        assert np.array_equal(t1.threshold[t1.feature >= 0], t2.threshold[t2.feature >= 0])
        assert np.array_equal(t1.value, t2.value)
    probe = rng.standard_normal((20, 4))
    assert np.array_equal(m1.predict(probe), m2.predict(probe))


def test_tie_breaks_to_lowest_feature_and_threshold(rng):
    x = rng.random(40)
    X = np.stack([x, x], axis=1)  # identical columns: identical gains
    y = (x > 0.5).astype(float)
    model = fit(X, y, GbdtConfig(iterations=1, max_depth=1))
    root_feature = model.trees[0].feature[0]
    assert root_feature == 0


def test_depth_one_is_a_stump(rng):
    X = rng.random((100, 2))
    y = (X[:, 0] > 0.5).astype(float)
    model = fit(X, y, GbdtConfig(iterations=1, max_depth=1))
    t = model.trees[0]
    assert (t.feature >= 0).sum() == 1
    assert len(t.value) == 3


def test_predict_width_mismatch(rng):
    model = fit(rng.random((10, 3)), rng.random(10), GbdtConfig(iterations=1, max_depth=2))
    with pytest.raises(GbdtError):
        model.predict(rng.random((5, 2)))


def test_nonfinite_target_rejected(rng):
    with pytest.raises(GbdtError):
        fit(rng.random((10, 2)), np.array([np.nan] + [0.0] * 9), GbdtConfig(iterations=1))
