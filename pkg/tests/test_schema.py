import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recourse_trees.predictor import ConstantPredictor, RulePredictor
from recourse_trees.schema import (
    Dataset,
    FeatureSchema,
    FeatureSpec,
    SchemaError,
    binarize,
    compute_affected,
    fit_binning,
    fit_cdfs,
    load_dataset,
    load_schema,
    write_dataset,
)

from _util import mixed_data


def one_numeric(values, bins=5, name="x"):
    schema = FeatureSchema((FeatureSpec(name, "numeric", bins=bins),))
    return Dataset(schema, np.asarray(values, dtype=float)[:, None])


# -- schema validation


def test_schema_defaults_and_roundtrip(tmp_path):
    doc = {"features": [
        {"name": "age", "kind": "numeric", "actionability": "immutable"},
        {"name": "job", "kind": "categorical", "categories": ["a", "b"]},
        {"name": "owner", "kind": "binary"},
    ]}
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(doc))
    schema = load_schema(path)
    assert schema[0].bins == 10 and schema[0].max_bin_shift == 9
    assert schema[1].actionability == "free"
    assert FeatureSchema.from_dict(schema.to_dict()) == schema
    assert schema.fingerprint() == FeatureSchema.from_dict(schema.to_dict()).fingerprint()


@pytest.mark.parametrize("spec", [
    dict(name="x", kind="numeric", bins=1),
    dict(name="x", kind="categorical", categories=()),
    dict(name="x", kind="categorical", categories=("a", "a")),
    dict(name="x", kind="binary", actionability="increase_only"),
    dict(name="x", kind="categorical", categories=("a",), actionability="decrease_only"),
    dict(name="x", kind="ordinal"),
    dict(name="x", kind="numeric", actionability="sometimes"),
])
def test_schema_rejects_invalid_specs(spec):
    with pytest.raises(SchemaError):
        FeatureSpec(**spec)


def test_schema_rejects_duplicate_names():
    with pytest.raises(SchemaError):
        FeatureSchema((FeatureSpec("x", "binary"), FeatureSpec("x", "binary")))


def test_with_bins_resets_default_shift():
    schema = FeatureSchema((
        FeatureSpec("a", "numeric", bins=5),
        FeatureSpec("b", "numeric", bins=10, max_bin_shift=3),
    ))
    rebinned = schema.with_bins(20)
    assert (rebinned[0].bins, rebinned[0].max_bin_shift) == (20, 19)
    assert (rebinned[1].bins, rebinned[1].max_bin_shift) == (20, 3)


# -- load_dataset


def test_load_three_rows_any_column_order(tmp_path):
    schema = FeatureSchema((
        FeatureSpec("age", "numeric"),
        FeatureSpec("job", "categorical", categories=("a", "b")),
    ))
    path = tmp_path / "d.csv"
    path.write_text("job,extra,age\na,zzz,30\nb,zzz,41.5\na,zzz,22\n")
    data = load_dataset(path, schema)
    assert data.n == 3
    np.testing.assert_array_equal(data.X, [[30, 0], [41.5, 1], [22, 0]])
    assert data.decode_row(1) == {"age": 41.5, "job": "b"}


@pytest.mark.parametrize("body, needle", [
    ("age,job\n30,c\n", "row 1, column 'job'"),
    ("age,job\n30,a\nold,b\n", "row 2, column 'age'"),
    ("job\na\n", "missing column 'age'"),
    ("age,job\nnan,a\n", "row 1"),
])
def test_load_errors_name_row_and_column(tmp_path, body, needle):
    schema = FeatureSchema((
        FeatureSpec("age", "numeric"),
        FeatureSpec("job", "categorical", categories=("a", "b")),
    ))
    path = tmp_path / "d.csv"
    path.write_text(body)
    with pytest.raises(SchemaError, match=needle):
        load_dataset(path, schema)


def test_label_column_and_write_roundtrip(tmp_path):
    data = mixed_data(np.random.default_rng(0), n=25)
    path = tmp_path / "d.csv"
    write_dataset(path, data, "label")
    back = load_dataset(path, data.schema, "label")
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.labels, data.labels)


def test_bad_label_rejected(tmp_path):
    schema = FeatureSchema((FeatureSpec("x", "numeric"),))
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(SchemaError, match="label"):
        load_dataset(path, schema, "y")


# -- compute_affected


def test_affected_constant_predictors():
    data = one_numeric([1, 2, 3])
    assert compute_affected(data, ConstantPredictor(1)).tolist() == []
    assert compute_affected(data, ConstantPredictor(0)).tolist() == [0, 1, 2]


def test_affected_threshold_rule():
    data = one_numeric([3, 5, 7])
    rule = RulePredictor(data.schema, [{"when": [{"feature": "x", "op": ">=", "value": 5}], "label": 1}], 0)
    # by hand: 3 < 5 -> 0, 5 >= 5 -> 1, 7 >= 5 -> 1
    assert compute_affected(data, rule).tolist() == [0]


# -- empirical CDFs


def test_cdf_counts():
    cdf = fit_cdfs(one_numeric(range(1, 11)))
    assert cdf(0, 5) == 0.5  # five of ten values are <= 5
    assert cdf(0, 0.5) == 0.0
    assert cdf(0, 10) == 1.0
    assert cdf(0, 4.5) == 0.4


def test_cdf_rejects_empty():
    with pytest.raises(SchemaError):
        fit_cdfs(one_numeric([]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=1, max_size=40),
       st.integers(-60, 60), st.integers(-60, 60), st.randoms(use_true_random=False))
def test_cdf_monotone_and_order_free(values, a, b, rnd):
    v, w = min(a, b), max(a, b)
    cdf = fit_cdfs(one_numeric(values))
    shuffled = list(values)
    rnd.shuffle(shuffled)
    other = fit_cdfs(one_numeric(shuffled))
    assert cdf(0, v) <= cdf(0, w)
    assert cdf(0, v) == other(0, v) and cdf(0, w) == other(0, w)
    # independent count
    assert cdf(0, v) == sum(x <= v for x in values) / len(values)
    assert cdf(0, max(values)) == 1.0


# -- binning and binarization


def test_equal_width_thresholds():
    binning = fit_binning(one_numeric([0, 10, 5]))
    np.testing.assert_allclose(binning[0].thresholds, [2, 4, 6, 8])


def test_binarize_example_instance():
    data = one_numeric([0, 10, 3])
    view = binarize(data, [2])
    # x=3 against thresholds 2,4,6,8
    assert view.bits.tolist() == [[0, 1, 1, 1]]


def test_categorical_one_hot_predicates():
    schema = FeatureSchema((FeatureSpec("c", "categorical", categories=("a", "b", "c")),
                            FeatureSpec("flag", "binary")))
    data = Dataset(schema, np.array([[0, 1], [2, 0], [1, 1]], dtype=float))
    view = binarize(data, [0, 1, 2])
    assert len(view.predicates) == 4
    assert view.bits.tolist() == [[1, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 1]]


def test_constant_feature_warns_and_adds_nothing():
    schema = FeatureSchema((FeatureSpec("k", "numeric"), FeatureSpec("x", "numeric", bins=2)))
    data = Dataset(schema, np.array([[4, 0], [4, 1], [4, 2]], dtype=float))
    with pytest.warns(UserWarning, match="constant"):
        view = binarize(data, [0, 1, 2])
    assert [p.feature for p in view.predicates] == [1]


def test_back_translation_and_determinism():
    data = mixed_data(np.random.default_rng(4), n=120)
    affected = np.arange(0, 120, 2)
    view = binarize(data, affected)
    again = binarize(data, affected)
    assert np.array_equal(view.bits, again.bits)
    for p, pred in enumerate(view.predicates):
        for r, i in enumerate(affected):
            x = data.X[i, pred.feature]
            expect = x <= pred.value if pred.op == "le" else x == pred.value
            assert view.bits[r, p] == int(expect)
        assert pred.describe(data.schema)
