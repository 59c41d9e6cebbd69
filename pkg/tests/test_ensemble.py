import numpy as np
import pytest
from hypothesis import given, strategies as st

from metboost.data import Dataset
from metboost.ensemble import (BASELINE, METBOOST, BoostModel, BoostParams, Stage, boost,
                               boost_baseline, boost_metboost, encode, predict, predict_parts,
                               predict_path)
from metboost.errors import ParameterError, SchemaError
from metboost.modelfile import dumps

import two_school
from conftest import grouped_data, make_dataset


def two_school_model():
    d = make_dataset(two_school.X, np.zeros(8), two_school.GROUPS, names=["GPA", "HW"],
                     labels=["school1", "school2"])
    st_ = Stage(two_school.tree(), two_school.BETA.copy(), two_school.b_matrix(),
                np.ones(4), np.ones(4))
    model = BoostModel(METBOOST, 0.0, 1.0, [st_], d.names, d.levels, d.group_labels,
                       BoostParams(n_trees=1, shrinkage=1.0))
    return model, d


def test_two_school_single_stage_prediction():
    model, d = two_school_model()
    yhat = predict(model, d)
    expected = two_school.XT @ two_school.BETA + two_school.ZT @ two_school.B_PRINTED
    assert np.array_equal(yhat, expected)
    assert yhat[0] == pytest.approx(2.2, abs=1e-15)
    unseen = Dataset(two_school.X[:1], [0.0], [0], d.names, d.levels, ("school9",))
    assert predict(model, unseen)[0] == 2.7


def test_zero_stages_is_mean():
    d = grouped_data(0)
    model = boost(d, BoostParams(n_trees=5, min_node=5))
    np.testing.assert_array_equal(predict(model, d, 0), np.full(d.n, d.y.mean()))
    with pytest.raises(ParameterError):
        predict(model, d, 6)


def test_saturated_single_tree_interpolates():
    rng = np.random.default_rng(1)
    d = make_dataset(rng.standard_normal((32, 2)), rng.standard_normal(32), np.zeros(32))
    model = boost_baseline(d, BoostParams(n_trees=1, shrinkage=1.0, depth=30, min_node=1,
                                          bag_fraction=1.0), include_group=False)
    np.testing.assert_allclose(predict(model, d), d.y, atol=1e-12)
    assert model.history["train_mse"][0] < 1e-24


def test_single_stage_arithmetic():
    d = grouped_data(2)
    model = boost_baseline(d, BoostParams(n_trees=1, shrinkage=0.1, min_node=5))
    X, _ = encode(model, d)
    tree = model.stages[0].tree
    np.testing.assert_allclose(predict(model, d), d.y.mean() + 0.1 * tree.predict(X), atol=1e-14)


def test_training_error_strictly_decreases_early():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 3))
    d = make_dataset(X, X[:, 0] ** 2 + 0.3 * rng.standard_normal(200), rng.integers(0, 5, 200))
    for mode in (BASELINE, METBOOST):
        mse = boost(d, BoostParams(n_trees=50, shrinkage=0.1, min_node=10, bag_fraction=1.0),
                    mode).history["train_mse"]
        assert np.all(np.diff(mse) < 0)


@given(seed=st.integers(0, 1000), mode=st.sampled_from([BASELINE, METBOOST]))
def test_additivity_and_path(seed, mode):
    d = grouped_data(seed, n=80)
    model = boost(d, BoostParams(n_trees=8, shrinkage=0.3, min_node=5, seed=seed), mode)
    path = predict_path(model, d)
    for m in (0, 3, 8):
        np.testing.assert_allclose(path[m], predict(model, d, m), atol=1e-12)
    X, gcodes = encode(model, d)
    fixed, rand = predict_parts(model, d)
    np.testing.assert_allclose(model.init + fixed + rand, path[-1], atol=1e-12)
    np.testing.assert_allclose(np.mean((d.y - path[-1]) ** 2), model.history["train_mse"][-1],
                               rtol=1e-10)
    if mode == BASELINE:
        assert np.all(rand == 0)


def test_determinism():
    d = grouped_data(4)
    for mode in (BASELINE, METBOOST):
        a = boost(d, BoostParams(n_trees=20, min_node=5, seed=9), mode)
        b = boost(d, BoostParams(n_trees=20, min_node=5, seed=9), mode)
        assert dumps(a) == dumps(b)
        c = boost(d, BoostParams(n_trees=20, min_node=5, seed=10), mode)
        assert dumps(a) != dumps(c)


def test_group_column_handling():
    d = grouped_data(5)
    met = boost_metboost(d, BoostParams(n_trees=30, min_node=5))
    assert met.names == d.names and met.group_column == -1
    base = boost_baseline(d, BoostParams(n_trees=30, min_node=5, shrinkage=0.5))
    assert base.names == d.names + ("id",) and base.group_column == d.p
    assert base.levels[-1] == d.group_labels


def test_unseen_groups_get_fixed_part_only():
    d = grouped_data(6)
    model = boost_metboost(d, BoostParams(n_trees=30, min_node=5, shrinkage=0.2))
    fixed, rand = predict_parts(model, d)
    assert np.any(rand != 0)
    other = Dataset(d.X, d.y, np.zeros(d.n, np.int64), d.names, d.levels, ("new",))
    f2, r2 = predict_parts(model, other)
    np.testing.assert_array_equal(f2, fixed)
    assert np.all(r2 == 0)


def test_single_group_metboost_equals_plain_boosting():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((150, 3))
    d = make_dataset(X, np.sin(2 * X[:, 0]) + rng.standard_normal(150), np.zeros(150))
    p = BoostParams(n_trees=40, shrinkage=0.2, min_node=5, seed=3)
    met = boost_metboost(d, p)
    base = boost_baseline(d, p, include_group=False)
    assert np.max(np.abs(predict(met, d) - predict(base, d))) < 1e-10


def test_random_effects_off_equals_plain_boosting():
    d = grouped_data(8)
    p = BoostParams(n_trees=40, shrinkage=0.2, min_node=5, seed=4)
    met = boost(d, p, METBOOST, random_effects=False)
    base = boost_baseline(d, p, include_group=False)
    assert np.max(np.abs(predict(met, d) - predict(base, d))) < 1e-10


def test_fit_correlates_with_outcome():
    d = grouped_data(9, n=300)
    model = boost_metboost(d, BoostParams(n_trees=100, shrinkage=0.05, min_node=10))
    assert np.corrcoef(predict(model, d), d.y)[0, 1] > 0.5


def test_encode_levels_and_schema():
    rng = np.random.default_rng(10)
    X = np.column_stack([rng.standard_normal(40), rng.integers(0, 3, 40)])
    d = make_dataset(X, X[:, 1] + rng.standard_normal(40), rng.integers(0, 2, 40),
                     levels=[None, ("a", "b", "c")])
    model = boost_metboost(d, BoostParams(n_trees=5, min_node=3))
    new = Dataset(np.array([[0.0, 0.0], [0.0, 1.0]]), [0, 0], [0, 0], d.names,
                  (None, ("b", "z")), ("s0",))
    Xe, g = encode(model, new)
    assert Xe[0, 1] == 1.0 and np.isnan(Xe[1, 1])
    assert np.all(np.isfinite(predict(model, new)))
    missing = Dataset(np.zeros((1, 1)), [0], [0], ("x1",), (None,), ("s0",))
    with pytest.raises(SchemaError):
        predict(model, missing)


def test_params_validation():
    for bad in (dict(n_trees=0), dict(shrinkage=0.0), dict(shrinkage=1.5), dict(bag_fraction=0),
                dict(depth=0), dict(min_node=0)):
        with pytest.raises(ParameterError):
            BoostParams(**bad)
    with pytest.raises(ParameterError):
        boost(grouped_data(0), BoostParams(n_trees=1), mode="other")
