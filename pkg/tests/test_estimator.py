import numpy as np
import pytest
from sklearn.base import clone

from llmpe.domain import CourseCatalog, generate_profile, sample_bundles
from llmpe.estimator import MVNNEnsembleRegressor


@pytest.fixture(scope="module")
def data():
    cat = CourseCatalog()
    p = generate_profile(cat, 0)
    rng = np.random.default_rng(0)
    X = sample_bundles(cat, 200, rng)
    return p, X, p.value(X)


def small(**kw):
    return MVNNEnsembleRegressor(hidden_widths=(8, 8), n_members=3, reg_epochs=100,
                                 random_state=0, **kw)


def test_params_roundtrip_through_clone():
    est = small(loss="bce", q=0.5)
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(class_lr=0.5)
    assert est.class_lr != 0.5


def test_fit_predict_shapes_and_determinism(data):
    _, X, y = data
    a = small().fit(X, y)
    b = small().fit(X, y)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert a.predict_members(X).shape == (3, len(X))
    assert np.all(a.predict_var(X) >= 0)
    assert a.predict(np.zeros((1, 25)))[0] == 0.0
    assert np.corrcoef(a.predict(X), y)[0, 1] > 0.8
    assert a.score(X, y) > 0.5


def test_fit_comparisons_moves_toward_labels(data):
    p, X, y = data
    est = small(class_epochs=20).fit(X, y)
    rng = np.random.default_rng(1)
    X1 = sample_bundles(CourseCatalog(), 150, rng)
    X2 = sample_bundles(CourseCatalog(), 150, rng)
    lab = (p.value(X1) > p.value(X2)).astype(float)
    before = est.predict(X1) > est.predict(X2)
    est.fit_comparisons(X1, X2, lab)
    after = est.predict(X1) > est.predict(X2)
    assert np.mean(after == lab) >= np.mean(before == lab) - 0.02
    assert est.n_comparisons_seen_ == 150
    assert all(m.is_feasible() for m in est.members_)


def test_finetune_restarts_from_regression_weights(data):
    _, X, y = data
    est = small().fit(X, y)
    X1, X2 = X[:20], X[20:40]
    lab = np.ones(20)
    est.fit_comparisons(X1, X2, lab)
    est._shuffle_rng = np.random.default_rng(5)
    est.fit_comparisons(X1, X2, lab)
    again = est.predict(X)
    est2 = small().fit(X, y)
    est2._shuffle_rng = np.random.default_rng(5)
    est2.fit_comparisons(X1, X2, lab)
    np.testing.assert_allclose(again, est2.predict(X))


def test_bad_finetune_mode(data):
    _, X, y = data
    est = small(finetune_from="warm").fit(X, y)
    with pytest.raises(ValueError):
        est.fit_comparisons(X[:2], X[2:4], [1, 0])


def test_bt_scale_none_means_raw_units(data):
    _, X, y = data
    est = small(comparison_scale=None).fit(X, y)
    assert est.target_scale_ == pytest.approx(y.max())
    np.testing.assert_allclose(est.bt_utilities(X), est.predict_members(X))
    est.set_params(comparison_scale=2.0)
    np.testing.assert_allclose(est.bt_utilities(X), est.predict_members(X) * 2.0 / est.target_scale_)


def test_comparisons_before_fit():
    X = np.eye(4)
    est = MVNNEnsembleRegressor(hidden_widths=(4,), n_members=2, random_state=0)
    est.fit_comparisons(X[:2], X[2:], [1, 0])
    assert est.predict(X).shape == (4,)


def test_save_load_roundtrip(tmp_path, data):
    _, X, y = data
    est = small().fit(X, y)
    est.save(tmp_path / "m.npz")
    back = MVNNEnsembleRegressor.load(tmp_path / "m.npz")
    np.testing.assert_array_equal(back.predict(X), est.predict(X))
    assert back.get_params() == est.get_params()
    back.fit_comparisons(X[:5], X[5:10], np.ones(5))


def test_validation_errors(data):
    _, X, y = data
    with pytest.raises(ValueError):
        MVNNEnsembleRegressor(n_members=1).fit(X, y)
    est = small().fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 24)))
