"""Held-out evaluation, generalization distance and per-group bias audits.

Evaluation never reads the cache: each instance is routed through the tree's
original-feature tests, its leaf action applied, and cost and loss recomputed
with the *training* CDFs and the classifier.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .actions import apply_action_batch
from .cache import mps_numerator
from .pipeline import RecourseContext
from .schema import Dataset, SchemaError, format_value


class EvaluationError(ValueError):
    pass


@dataclass
class SummaryMetrics:
    cost: float  # mean MPS cost per affected instance
    loss: float  # fraction of affected instances whose action fails
    invalidity: float
    n: int
    cost_total_num: int = 0  # summed cost numerators (units of 1/denominator)
    loss_total: int = 0
    denominator: int = 1

    @classmethod
    def from_totals(cls, cost_num: int, loss: int, n: int, denominator: int) -> "SummaryMetrics":
        c = cost_num / denominator / n
        l = loss / n
        return cls(c, l, c + l, n, int(cost_num), int(loss), int(denominator))


def route(tree, x, predicates) -> tuple[int, int]:
    """(leaf id, action index) for one encoded instance."""
    leaf = int(tree.route(np.atleast_2d(x), predicates)[0])
    return leaf, int(tree.leaf_actions()[leaf])


def per_instance(tree, X0: np.ndarray, ctx: RecourseContext) -> tuple[np.ndarray, np.ndarray]:
    """Cost numerators and losses of each row under the action of its leaf."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    acts = tree.leaf_actions()[tree.route(X0, ctx.predicates)]
    cost = np.zeros(X0.shape[0], dtype=np.int64)
    loss = np.zeros(X0.shape[0], dtype=np.int64)
    for a in np.unique(acts):
        rows = np.flatnonzero(acts == a)
        action = ctx.actions[int(a)]
        sub = X0[rows]
        cost[rows] = mps_numerator(action, sub, ctx.cdfs, ctx.binning)
        moved = apply_action_batch(action, sub, ctx.binning)
        loss[rows] = np.asarray(ctx.predictor.predict_batch(moved)) == 0
    return cost, loss


def affected_rows(population: Dataset, ctx: RecourseContext) -> np.ndarray:
    return np.flatnonzero(np.asarray(ctx.predictor.predict_batch(population.X)) == 0)


def evaluate(tree, population: Dataset, ctx: RecourseContext) -> SummaryMetrics:
    rows = affected_rows(population, ctx)
    if rows.size == 0:
        raise EvaluationError("population has no affected instances")
    cost, loss = per_instance(tree, population.X[rows], ctx)
    return SummaryMetrics.from_totals(int(cost.sum()), int(loss.sum()), rows.size, ctx.cdfs.n)


def generalization_distance(train_metrics, test_metrics) -> dict:
    """Euclidean distance per solution between train and test (cost, loss) means."""
    if len(train_metrics) != len(test_metrics):
        raise EvaluationError("train and test metric lists differ in length")
    d = np.array([
        math.hypot(a.cost - b.cost, a.loss - b.loss) for a, b in zip(train_metrics, test_metrics)
    ])
    return {
        "distances": d.tolist(),
        "mean": float(d.mean()) if d.size else 0.0,
        "sd": float(d.std()) if d.size else 0.0,
    }


def best_invalidity(points) -> float:
    """Lowest ``cost + loss`` over an iterable of (mean cost, mean loss) points."""
    return min(c + l for c, l in points)


def degradation(timed_points, full_points) -> float:
    """Relative invalidity increase (percent) of a timed-out front over the full one."""
    inv_t = best_invalidity(timed_points)
    inv_f = best_invalidity(full_points)
    if inv_f == 0:
        return 0.0 if inv_t == 0 else math.inf
    return (inv_t - inv_f) / inv_f * 100.0


# --------------------------------------------------------------------------
# fairness


def fairness_metrics(groups, y_pred, y_true=None) -> dict:
    """Demographic-parity and equal-opportunity statistics per group.

    The disadvantaged group has the lowest favorable-prediction rate, the
    advantaged group the highest. The disparate impact ratio is their ratio;
    the TPR gap is advantaged minus disadvantaged.
    """
    groups = np.asarray(groups)
    y_pred = np.asarray(y_pred)
    names = sorted(set(groups.tolist()), key=str)
    out = {"groups": {}}
    for g in names:
        m = groups == g
        n = int(m.sum())
        adverse = int((y_pred[m] == 0).sum())
        entry = {"n": n, "adverse": adverse, "adverse_rate": adverse / n, "favorable_rate": 1 - adverse / n}
        if y_true is not None:
            pos = m & (np.asarray(y_true) == 1)
            npos = int(pos.sum())
            entry["n_positive"] = npos
            entry["tpr"] = float((y_pred[pos] == 1).sum() / npos) if npos else float("nan")
        out["groups"][str(g)] = entry
    fav = {g: e["favorable_rate"] for g, e in out["groups"].items()}
    dis = min(fav, key=lambda g: (fav[g], g))
    adv = max(fav, key=lambda g: (fav[g], g))
    out["disadvantaged"], out["advantaged"] = dis, adv
    out["disparate_impact_ratio"] = fav[dis] / fav[adv] if fav[adv] > 0 else float("nan")
    if y_true is not None:
        out["tpr_gap"] = out["groups"][adv]["tpr"] - out["groups"][dis]["tpr"]
    return out


@dataclass
class AuditReport:
    group_feature: str
    disadvantaged: str
    advantaged: str
    groups: dict
    gaps: dict
    fraction_disadvantaged_worse: float
    classifier: dict
    per_solution: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_markdown(self) -> str:
        d, a = self.disadvantaged, self.advantaged
        lines = [
            f"# Recourse audit by `{self.group_feature}`",
            "",
            f"Disadvantaged group: **{d}**; advantaged group: **{a}**.",
            "",
            "## Classifier",
            "",
            "| group | n | adverse rate | TPR |",
            "|---|---|---|---|",
        ]
        for g, e in self.classifier["groups"].items():
            tpr = e.get("tpr")
            tpr_s = "" if tpr is None else f"{tpr:.3f}"
            lines.append(f"| {g} | {e['n']} | {e['adverse_rate']:.3f} | {tpr_s} |")
        lines += ["", f"Disparate impact ratio: {self.classifier['disparate_impact_ratio']:.3f}"]
        if "tpr_gap" in self.classifier:
            lines.append(f"TPR gap ({a} - {d}): {self.classifier['tpr_gap']:+.3f}")
        lines += [
            "",
            f"## Recourse across {len(self.per_solution)} front solutions",
            "",
            "| group | cost | loss | invalidity |",
            "|---|---|---|---|",
        ]
        for g in (d, a):
            e = self.groups[g]
            lines.append(
                f"| {g} | {e['cost_mean']:.3f} ± {e['cost_sd']:.3f} | "
                f"{e['loss_mean']:.3f} ± {e['loss_sd']:.3f} | "
                f"{e['invalidity_mean']:.3f} ± {e['invalidity_sd']:.3f} |"
            )
        lines += [
            "",
            f"Mean gap ({d} - {a}): cost {self.gaps['cost']:+.3f}, loss {self.gaps['loss']:+.3f}, "
            f"invalidity {self.gaps['invalidity']:+.3f}",
            f"Share of solutions where {d} has higher invalidity: "
            f"{100 * self.fraction_disadvantaged_worse:.1f}%",
            "",
            "| solution | " + " | ".join(f"{g} {m}" for g in (d, a) for m in ("cost", "loss", "inv")) + " |",
            "|---" * 7 + "|",
        ]
        for row in self.per_solution:
            cells = [f"{row[g][m]:.3f}" for g in (d, a) for m in ("cost", "loss", "invalidity")]
            lines.append(f"| {row['solution_index']} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def audit(trees, population: Dataset, group_feature: str, ctx: RecourseContext,
          pair: tuple[str, str] | None = None) -> AuditReport:
    """Per-group recourse quality across every front tree plus classifier fairness.

    ``pair`` fixes (disadvantaged, advantaged); by default they are the groups
    with the lowest and highest favorable-prediction rate.
    """
    try:
        j = population.schema.index(group_feature)
    except SchemaError:
        raise EvaluationError(f"unknown group feature {group_feature!r}") from None
    spec = population.schema[j]
    if spec.kind == "numeric":
        raise EvaluationError("group feature must be categorical or binary")
    groups = np.array([format_value(spec, v) for v in population.X[:, j]])
    if len(set(groups.tolist())) < 2:
        raise EvaluationError("population contains a single group")

    y_pred = np.asarray(ctx.predictor.predict_batch(population.X))
    clf = fairness_metrics(groups, y_pred, population.labels)
    dis, adv = pair if pair is not None else (clf["disadvantaged"], clf["advantaged"])

    rows = np.flatnonzero(y_pred == 0)
    if rows.size == 0:
        raise EvaluationError("population has no affected instances")
    X0, g0 = population.X[rows], groups[rows]
    names = sorted(clf["groups"])
    members = {g: g0 == g for g in names}
    denom = ctx.cdfs.n

    per_solution = []
    for s, tree in enumerate(trees):
        cost, loss = per_instance(tree, X0, ctx)
        row = {"solution_index": s}
        for g in names:
            m = members[g]
            if not m.any():
                row[g] = {"cost": float("nan"), "loss": float("nan"), "invalidity": float("nan"), "n": 0}
                continue
            c = float(cost[m].sum()) / denom / m.sum()
            l = float(loss[m].sum()) / m.sum()
            row[g] = {"cost": c, "loss": l, "invalidity": c + l, "n": int(m.sum())}
        per_solution.append(row)

    summary = {}
    for g in names:
        entry = {"n_affected": int(members[g].sum())}
        for metric in ("cost", "loss", "invalidity"):
            vals = np.array([r[g][metric] for r in per_solution])
            entry[f"{metric}_mean"] = float(vals.mean()) if vals.size else float("nan")
            entry[f"{metric}_sd"] = float(vals.std()) if vals.size else float("nan")
        summary[g] = entry

    gaps = {}
    for metric in ("cost", "loss", "invalidity"):
        diffs = np.array([r[dis][metric] - r[adv][metric] for r in per_solution])
        gaps[metric] = float(diffs.mean()) if diffs.size else float("nan")
    worse = np.array([r[dis]["invalidity"] > r[adv]["invalidity"] for r in per_solution])
    return AuditReport(
        group_feature=group_feature,
        disadvantaged=dis,
        advantaged=adv,
        groups=summary,
        gaps=gaps,
        fraction_disadvantaged_worse=float(worse.mean()) if worse.size else 0.0,
        classifier=clf,
        per_solution=per_solution,
    )


METRICS_COLUMNS = ["solution_index", "v_C", "v_L", "cost_mean", "loss_mean", "invalidity", "split", "group"]


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in METRICS_COLUMNS})


def metrics_row(index: int, m: SummaryMetrics, split: str, group: str = "all") -> dict:
    return {
        "solution_index": index,
        "v_C": repr(m.cost_total_num / m.denominator),
        "v_L": m.loss_total,
        "cost_mean": repr(m.cost),
        "loss_mean": repr(m.loss),
        "invalidity": repr(m.invalidity),
        "split": split,
        "group": group,
    }
