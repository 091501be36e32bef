import json

import numpy as np
import pytest

from recourse_trees.predictor import RulePredictor
from recourse_trees.schema import SchemaError, load_dataset, load_schema
from recourse_trees.synth import generate, german_like

SPEC = {
    "n": 300, "seed": 4,
    "features": [
        {"name": "sex", "kind": "categorical", "categories": ["f", "m"], "actionability": "immutable"},
        {"name": "income", "kind": "numeric", "low": 0, "high": 100, "bins": 10,
         "actionability": "increase_only", "by_group": {"f": [0, 50]}},
        {"name": "owner", "kind": "binary", "p": 0.3},
    ],
    "rule": {"feature": "income", "threshold": 55},
    "group_feature": "sex",
}


def test_single_threshold_labels_follow_rule():
    b = generate(SPEC)
    income = b.data.X[:, 1]
    assert np.array_equal(b.data.labels, (income >= 55).astype(int))
    pred = RulePredictor(b.schema, b.rules["rules"], b.rules["default"])
    assert np.array_equal(pred.predict_batch(b.data.X), b.data.labels)


def test_by_group_ranges():
    b = generate(SPEC)
    female = b.data.X[:, 0] == 0
    assert b.data.X[female, 1].max() <= 50
    assert b.data.X[~female, 1].max() > 50


def test_group_thresholds():
    spec = {**SPEC, "group_thresholds": {"feature": "sex", "thresholds": {"f": 30, "m": 70}}}
    b = generate(spec)
    tau = np.where(b.data.X[:, 0] == 0, 30, 70)
    assert np.array_equal(b.data.labels, (b.data.X[:, 1] >= tau).astype(int))
    pred = RulePredictor(b.schema, b.rules["rules"], b.rules["default"])
    assert np.array_equal(pred.predict_batch(b.data.X), b.data.labels)


def test_seeded_and_written(tmp_path):
    a, b = generate(SPEC), generate(SPEC)
    assert np.array_equal(a.data.X, b.data.X)
    paths = a.write(tmp_path)
    schema = load_schema(paths["schema"])
    back = load_dataset(paths["data"], schema, "label")
    assert np.array_equal(back.X, a.data.X) and np.array_equal(back.labels, a.data.labels)
    assert json.loads(paths["rules"].read_text()) == a.rules


def test_label_noise_flips_some():
    b = generate({**SPEC, "label_noise": 0.2})
    clean = (b.data.X[:, 1] >= 55).astype(int)
    assert 0.1 < np.mean(b.data.labels != clean) < 0.3


@pytest.mark.parametrize("bad", [
    {"n": 5, "features": []},
    {**SPEC, "rule": {"feature": "owner", "threshold": 1}},
    {**SPEC, "features": [SPEC["features"][1], SPEC["features"][0]],
     "group_thresholds": {"feature": "sex", "thresholds": {"f": 1, "m": 2}}},
])
def test_bad_specs(bad):
    with pytest.raises(SchemaError):
        generate(bad)


def test_german_like_shape():
    d = german_like()
    assert d.X.shape == (1000, 20)
    assert 0.6 < d.labels.mean() < 0.8
    mutable = [f.name for f in d.schema if f.actionability != "immutable"]
    assert mutable == ["checking_status", "duration", "credit_amount", "savings_status", "housing", "telephone"]
