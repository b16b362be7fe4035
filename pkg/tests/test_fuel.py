from __future__ import annotations

import numpy as np
import pytest

from crlnav.fuel import (N_FEATURES, NUMERIC_FIELDS, BoostParams, OperationalRecord, TreeEnsemble,
                         block_offsets, encode_features, encode_table, fit_arrays, fit_ensemble, predict_fcr,
                         read_records, regression_metrics, write_records)
from crlnav.synthetic import SyntheticFuelLaw, fuel_dataset


def record(**kw):
    base = dict(distance_travelled=6.0, lat=10.0, lon=65.0, sog=12.0, loa=180.0, beam=30.0, gt=40000.0,
                ship_type=3, month=2, day=8, hour=13, fcr_target=1.5)
    base.update(kw)
    return OperationalRecord(**base)


def test_layout_has_86_features():
    assert N_FEATURES == 86
    x = encode_features(record())
    assert x.shape == (86,)
    assert x[:7].tolist() == [6.0, 10.0, 65.0, 12.0, 180.0, 30.0, 40000.0]
    off = block_offsets()
    assert x[off["ship_type"] + 3] == 1.0
    assert x[off["month"] + 1] == 1.0
    assert x[off["day"] + 7] == 1.0
    assert x[off["hour"] + 13] == 1.0
    assert x[len(NUMERIC_FIELDS):].sum() == 4.0


@pytest.mark.parametrize("kw", [{"ship_type": 12}, {"month": 0}, {"month": 13}, {"day": 32}, {"hour": 24}])
def test_out_of_vocabulary_rejected(kw):
    name = next(iter(kw))
    with pytest.raises(ValueError, match=name):
        encode_features(record(**kw))


def test_non_finite_numeric_rejected():
    with pytest.raises(ValueError):
        encode_features(record(sog=float("nan")))


def test_encode_table_target_handling():
    X, y = encode_table([record(), record(fcr_target=2.0)])
    assert X.shape == (2, 86) and y.tolist() == [1.5, 2.0]
    _, y = encode_table([record(), record(fcr_target=None)])
    assert y is None


def test_zero_trees_predicts_mean():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(50, 86))
    y = rng.uniform(size=50)
    m = fit_arrays(X, y, BoostParams(n_trees=0))
    assert np.allclose(m.predict(X), y.mean())


def test_empty_dataset_raises():
    with pytest.raises(ValueError):
        fit_arrays(np.zeros((0, 86)), np.zeros(0))
    with pytest.raises(ValueError):
        fit_ensemble([])


def test_single_split_recovers_step_function():
    X = np.zeros((40, 86))
    X[:, 3] = np.arange(40)
    y = (X[:, 3] >= 20).astype(float) * 4.0 + 1.0
    m = fit_arrays(X, y, BoostParams(n_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1))
    assert np.allclose(m.predict(X), y)
    assert m.trees[0].feature[0] == 3
    assert 19 <= m.trees[0].threshold[0] < 20


def test_binary_column_split():
    rng = np.random.default_rng(1)
    X = np.zeros((60, 86))
    X[:, 3] = rng.uniform(size=60)
    X[np.arange(60), 7 + rng.integers(0, 12, 60)] = 1.0
    y = 3.0 * X[:, 7 + 5]
    m = fit_arrays(X, y, BoostParams(n_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1))
    assert m.trees[0].feature[0] == 12
    assert np.allclose(m.predict(X), y)


def test_prediction_clamped_nonnegative():
    X = np.zeros((20, 86))
    X[:, 0] = np.arange(20)
    y = np.where(X[:, 0] < 10, -5.0, 1.0)
    m = fit_arrays(X, y, BoostParams(n_trees=5, max_depth=2, learning_rate=1.0, min_samples_leaf=1))
    assert m.raw_predict(X).min() < 0
    assert m.predict(X).min() == 0.0
    assert predict_fcr(m, X[0]) == 0.0


def test_fit_on_synthetic_data_and_save_load(tmp_path):
    rng = np.random.default_rng(2)
    train = fuel_dataset(1500, rng)
    test = fuel_dataset(300, rng)
    m = fit_ensemble(train, BoostParams(n_trees=60, max_depth=4))
    Xt, yt = encode_table(test)
    met = regression_metrics(m.predict(Xt), yt)
    assert met["r2"] > 80.0
    path = tmp_path / "fuel.json"
    m.save(path)
    m2 = TreeEnsemble.load(path)
    assert np.array_equal(m2.predict(Xt), m.predict(Xt))
    assert m2.predict_record(test[0]) == m.predict_record(test[0])


def test_load_rejects_wrong_format(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        TreeEnsemble.load(p)


def test_records_csv_roundtrip(tmp_path):
    recs = fuel_dataset(10, np.random.default_rng(3))
    p = tmp_path / "ops.csv"
    write_records(p, recs)
    back = read_records(p)
    assert back == recs


def test_records_csv_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("lat,lon\n1,2\n")
    with pytest.raises(ValueError, match="missing"):
        read_records(p)


def test_metrics():
    m = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
    assert m["mae"] == pytest.approx(1 / 3)
    assert m["rmse"] == pytest.approx(np.sqrt(1 / 3))
    assert m["r2"] == pytest.approx(100 * (1 - 1 / (14 / 3)))
    with pytest.raises(ValueError):
        regression_metrics([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        regression_metrics([1.0, 1.0], [2.0, 2.0])


def test_synthetic_law_values():
    law = SyntheticFuelLaw()
    r = law.rate(10.0, 50000.0, 0, 1)
    assert r == pytest.approx(5.0 * 1000 / 50000 + 0.2)
