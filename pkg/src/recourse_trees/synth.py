"""Seeded synthetic populations with planted decision rules.

A synth spec is a JSON object::

    {
      "n": 400, "seed": 7, "label_column": "label", "label_noise": 0.0,
      "features": [
        {"name": "sex", "kind": "categorical", "categories": ["female", "male"],
         "actionability": "immutable", "p": [0.5, 0.5]},
        {"name": "income", "kind": "numeric", "low": 0, "high": 100,
         "bins": 10, "actionability": "increase_only", "decimals": 2,
         "by_group": {"female": [0, 40]}},
        {"name": "owner", "kind": "binary", "p": 0.3}
      ],
      "rule": {"feature": "income", "threshold": 55},
      "group_thresholds": {"feature": "sex", "thresholds": {"female": 65, "male": 45}}
    }

The planted classifier is ``income >= threshold => 1`` (per group when
``group_thresholds`` is given), written out as a rule file. Ground-truth
labels equal the planted rule, flipped with probability ``label_noise``.
A numeric feature may draw from per-group ranges (``by_group``) once the
group feature has been listed; the group feature is the one named in
``group_thresholds``, or ``group_feature`` when there are no thresholds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import Dataset, FeatureSchema, FeatureSpec, SchemaError, write_dataset


@dataclass
class SynthBundle:
    data: Dataset
    rules: dict | None
    label_column: str = "label"

    @property
    def schema(self) -> FeatureSchema:
        return self.data.schema

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"data": out / "data.csv", "schema": out / "schema.json"}
        write_dataset(paths["data"], self.data, self.label_column)
        paths["schema"].write_text(json.dumps(self.schema.to_dict(), indent=2) + "\n")
        if self.rules is not None:
            paths["rules"] = out / "rules.json"
            paths["rules"].write_text(json.dumps(self.rules, indent=2) + "\n")
        return paths


_SPEC_KEYS = {"name", "kind", "actionability", "bins", "max_bin_shift", "categories"}


def _column(f: dict, n: int, rng: np.random.Generator, group=None) -> np.ndarray:
    """Sample one encoded column; ``group`` holds the group labels of each row."""
    kind = f["kind"]
    if kind == "numeric":
        lo = np.full(n, float(f.get("low", 0.0)))
        hi = np.full(n, float(f.get("high", 1.0)))
        if "by_group" in f:
            if group is None:
                raise SchemaError(f"{f['name']}: by_group needs the group feature to come first")
            for g, (a, b) in f["by_group"].items():
                lo[group == g], hi[group == g] = float(a), float(b)
        if np.any(hi < lo):
            raise SchemaError(f"{f['name']}: high < low")
        return np.round(rng.uniform(lo, hi), int(f.get("decimals", 2)))
    if kind == "binary":
        return (rng.random(n) < float(f.get("p", 0.5))).astype(np.float64)
    cats = f["categories"]
    p = f.get("p")
    return rng.choice(len(cats), size=n, p=p).astype(np.float64)


def generate(spec: dict) -> SynthBundle:
    """Build the population and its planted rule predictor from a spec dict."""
    try:
        n, features, rule = int(spec["n"]), spec["features"], spec["rule"]
    except KeyError as e:
        raise SchemaError(f"synth spec missing {e.args[0]!r}") from None
    rng = np.random.default_rng(spec.get("seed", 0))
    schema = FeatureSchema(
        tuple(FeatureSpec(**{k: v for k, v in f.items() if k in _SPEC_KEYS}) for f in features)
    )
    groups = spec.get("group_thresholds")
    group_name = groups["feature"] if groups else spec.get("group_feature")
    cols, group = [], None
    for f in features:
        cols.append(_column(f, n, rng, group))
        if f["name"] == group_name:
            group = np.array(f["categories"], dtype=object)[cols[-1].astype(np.int64)]
    X = np.column_stack(cols) if cols else np.empty((n, 0))

    target = rule["feature"]
    j = schema.index(target)
    if schema[j].kind != "numeric":
        raise SchemaError("the planted rule must test a numeric feature")

    if groups:
        g = schema.index(groups["feature"])
        cats = schema[g].categories
        if schema[g].kind != "categorical":
            raise SchemaError("group_thresholds needs a categorical group feature")
        thresholds = {c: float(groups["thresholds"][c]) for c in cats}
        tau = np.array([thresholds[cats[int(v)]] for v in X[:, g]])
        rules = {
            "rules": [
                {
                    "when": [
                        {"feature": groups["feature"], "op": "==", "value": c},
                        {"feature": target, "op": ">=", "value": thresholds[c]},
                    ],
                    "label": 1,
                }
                for c in cats
            ],
            "default": 0,
        }
    else:
        tau = np.full(n, float(rule["threshold"]))
        rules = {
            "rules": [{"when": [{"feature": target, "op": ">=", "value": float(rule["threshold"])}],
                       "label": 1}],
            "default": 0,
        }

    labels = (X[:, j] >= tau).astype(np.int64)
    noise = float(spec.get("label_noise", 0.0))
    if noise > 0:
        flip = rng.random(n) < noise
        labels[flip] = 1 - labels[flip]
    data = Dataset(schema, X, labels)
    return SynthBundle(data, rules, spec.get("label_column", "label"))


def load_spec(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# German-credit-shaped population (1,000 rows, 20 raw features)

_GERMAN = [
    # name, kind, actionability, extra
    ("checking_status", "categorical", "free", {"categories": ["lt0", "0to200", "ge200", "none"]}),
    ("duration", "numeric", "decrease_only", {"low": 4, "high": 72, "decimals": 0, "max_bin_shift": 4}),
    ("credit_history", "categorical", "immutable",
     {"categories": ["none_taken", "all_paid", "existing_paid", "delayed", "critical"]}),
    ("purpose", "categorical", "immutable",
     {"categories": ["car_new", "car_used", "furniture", "radio_tv", "appliances", "repairs",
                     "education", "retraining", "business", "other"]}),
    ("credit_amount", "numeric", "decrease_only", {"low": 250, "high": 18424, "decimals": 0,
                                                   "max_bin_shift": 4}),
    ("savings_status", "categorical", "free",
     {"categories": ["lt100", "100to500", "500to1000", "ge1000", "unknown"]}),
    ("employment", "categorical", "immutable",
     {"categories": ["unemployed", "lt1", "1to4", "4to7", "ge7"]}),
    ("installment_rate", "numeric", "immutable", {"low": 1, "high": 4, "decimals": 0}),
    ("personal_status", "categorical", "immutable",
     {"categories": ["male_div", "female_div_mar", "male_single", "male_mar"]}),
    ("other_debtors", "categorical", "immutable", {"categories": ["none", "co_applicant", "guarantor"]}),
    ("residence_since", "numeric", "immutable", {"low": 1, "high": 4, "decimals": 0}),
    ("property", "categorical", "immutable",
     {"categories": ["real_estate", "savings_insurance", "car", "unknown"]}),
    ("age", "numeric", "immutable", {"low": 19, "high": 75, "decimals": 0}),
    ("other_installment", "categorical", "immutable", {"categories": ["bank", "stores", "none"]}),
    ("housing", "categorical", "free", {"categories": ["rent", "own", "free"]}),
    ("existing_credits", "numeric", "immutable", {"low": 1, "high": 4, "decimals": 0}),
    ("job", "categorical", "immutable",
     {"categories": ["unskilled_nonres", "unskilled_res", "skilled", "highly_skilled"]}),
    ("num_dependents", "numeric", "immutable", {"low": 1, "high": 2, "decimals": 0}),
    ("telephone", "binary", "free", {}),
    ("foreign_worker", "binary", "immutable", {}),
]


def german_like(n: int = 1000, seed: int = 0) -> Dataset:
    """Same-shape stand-in for German Credit: 20 features, latent logistic labels.

    Labels follow a fixed linear score over checking account, duration,
    credit amount, savings, housing and age plus logistic noise, giving
    roughly 30% bad-credit labels as in the original data.
    """
    rng = np.random.default_rng(seed)
    specs, cols = [], []
    for name, kind, act, extra in _GERMAN:
        f = {"name": name, "kind": kind, "actionability": act, **extra}
        specs.append(FeatureSpec(**{k: v for k, v in f.items() if k in _SPEC_KEYS}))
        cols.append(_column(f, n, rng))
    X = np.column_stack(cols)
    schema = FeatureSchema(tuple(specs))

    def col(name):
        return X[:, schema.index(name)]

    score = (
        0.9 * col("checking_status")
        - 0.04 * col("duration")
        - 0.00012 * col("credit_amount")
        + 0.45 * col("savings_status")
        + 0.6 * (col("housing") == 1)
        + 0.02 * col("age")
        + 0.3 * col("telephone")
        + 0.2
    )
    noise = rng.logistic(0.0, 1.0, n)
    labels = (score + noise > 0).astype(np.int64)
    return Dataset(schema, X, labels)
