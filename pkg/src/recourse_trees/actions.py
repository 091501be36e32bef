"""Shared action set: single-feature edits pooled into bundles of up to ``k`` edits."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .schema import Binning, FeatureSchema

DEFAULT_MAX_ACTIONS = 250_000


class ActionSetTooLarge(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Edit:
    """One change to one feature.

    ``op`` is ``"flip"`` (binary), ``"set"`` (categorical, ``value`` is the
    target category code) or ``"shift"`` (numeric, ``value`` is the signed
    number of bins).
    """

    feature: int
    op: str
    value: int = 0

    def render(self, schema: FeatureSchema, binning: Binning | None = None, x=None) -> str:
        f = schema[self.feature]
        if self.op == "flip":
            return f"{f.name}: flip"
        if self.op == "set":
            return f"{f.name}: set to {f.categories[self.value]!r}"
        text = f"{f.name}: {self.value:+d} bins"
        if binning is not None and x is not None:
            new = apply_edit(self, np.atleast_2d(np.asarray(x, dtype=float)), binning)[0]
            text += f" (≈ {x[self.feature]:,.4g} → {new:,.4g})"
        return text

    def to_dict(self, schema: FeatureSchema) -> dict:
        f = schema[self.feature]
        if self.op == "flip":
            return {"feature": f.name, "op": "flip"}
        if self.op == "set":
            return {"feature": f.name, "op": "set_category", "category": f.categories[self.value]}
        return {"feature": f.name, "op": "shift_bins", "bins": self.value}


@dataclass(frozen=True)
class Action:
    edits: tuple[Edit, ...]
    index: int

    @property
    def is_null(self) -> bool:
        return not self.edits

    def render(self, schema: FeatureSchema) -> str:
        if not self.edits:
            return "no action"
        return "; ".join(e.render(schema) for e in self.edits)

    def to_dict(self, schema: FeatureSchema) -> dict:
        return {
            "index": self.index,
            "edits": [e.to_dict(schema) for e in self.edits],
            "text": self.render(schema),
        }


def generate_single_edits(schema: FeatureSchema, binning: Binning | None = None) -> list[Edit]:
    """All admissible single edits, ordered by feature then parameter.

    Immutable features contribute nothing, nor do numeric features that the
    binning marks constant.
    """
    edits = []
    for j, f in enumerate(schema):
        if not f.mutable:
            continue
        if f.kind == "binary":
            edits.append(Edit(j, "flip"))
        elif f.kind == "categorical":
            edits.extend(Edit(j, "set", c) for c in range(len(f.categories)))
        else:
            if binning is not None and binning[j].constant:
                continue
            lo = 1 if f.actionability == "increase_only" else -f.max_bin_shift
            hi = -1 if f.actionability == "decrease_only" else f.max_bin_shift
            edits.extend(Edit(j, "shift", d) for d in range(lo, hi + 1) if d != 0)
    return edits


def count_actions(singles: Sequence[Edit], k: int) -> int:
    """``1 + sum_{s<=k} e_s(group sizes)``, the size of the pooled set."""
    sizes = [len(list(g)) for _, g in itertools.groupby(singles, key=lambda e: e.feature)]
    e = [1] + [0] * k
    for n in sizes:
        for s in range(k, 0, -1):
            e[s] += e[s - 1] * n
    return sum(e)


class ActionSet:
    """Canonically ordered action set with the null action at index 0.

    Actions are ordered by size, then by the tuple of edited features
    (lexicographic), then by the positions of their edits in the single-edit
    list.
    """

    def __init__(self, schema: FeatureSchema, singles: list[Edit], combos: list[tuple[int, ...]], k: int):
        self.schema = schema
        self.singles = singles
        self.k = k
        self.combos = combos
        self.actions = [
            Action(tuple(singles[i] for i in combo), a) for a, combo in enumerate(combos)
        ]
        width = max([len(c) for c in combos] + [1])
        table = np.full((len(combos), width), -1, dtype=np.int64)
        for a, combo in enumerate(combos):
            table[a, : len(combo)] = combo
        self.edit_table = table

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, a: int) -> Action:
        return self.actions[a]

    def __iter__(self):
        return iter(self.actions)

    def fingerprint(self) -> str:
        doc = {
            "schema": self.schema.fingerprint(),
            "k": self.k,
            "singles": [[e.feature, e.op, e.value] for e in self.singles],
            "n": len(self),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def generate_action_set(
    schema: FeatureSchema,
    k: int = 3,
    binning: Binning | None = None,
    max_actions: int | None = DEFAULT_MAX_ACTIONS,
) -> ActionSet:
    if k < 1:
        raise ValueError("sparsity k must be >= 1")
    singles = generate_single_edits(schema, binning)
    total = count_actions(singles, k)
    if max_actions is not None and total > max_actions:
        raise ActionSetTooLarge(
            f"action set would hold {total:,} actions (cap {max_actions:,}); "
            "use fewer bins, a smaller max_bin_shift or a lower sparsity k"
        )
    groups = []
    for _, g in itertools.groupby(range(len(singles)), key=lambda i: singles[i].feature):
        groups.append(list(g))
    combos: list[tuple[int, ...]] = [()]
    for s in range(1, k + 1):
        for feats in itertools.combinations(range(len(groups)), s):
            combos.extend(itertools.product(*(groups[g] for g in feats)))
    return ActionSet(schema, singles, combos, k)


def apply_edit(edit: Edit, X: np.ndarray, binning: Binning | None) -> np.ndarray:
    """New values of ``edit.feature`` for every row of the encoded matrix ``X``."""
    col = X[:, edit.feature]
    if edit.op == "flip":
        return 1.0 - col
    if edit.op == "set":
        return np.full_like(col, float(edit.value))
    b = binning[edit.feature]
    cur = b.bin_of(col)
    dest = np.clip(cur + edit.value, 0, b.bins - 1)
    # a fully clamped shift leaves the value where it is
    return np.where(dest == cur, col, b.midpoint(dest))


def apply_action_batch(action: Action, X: np.ndarray, binning: Binning | None) -> np.ndarray:
    out = np.array(X, dtype=np.float64, copy=True)
    for e in action.edits:
        out[:, e.feature] = apply_edit(e, X, binning)
    return out


def apply_action(action: Action, x, schema: FeatureSchema, binning: Binning | None) -> np.ndarray:
    """``a(x)`` for a single encoded instance."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return apply_action_batch(action, X, binning)[0]
