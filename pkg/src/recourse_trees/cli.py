"""Command-line pipeline: ``solve``, ``evaluate``, ``audit`` and ``gen-synth``.

Exit codes: 0 success, 2 configuration or input error, 3 infeasible problem
(nobody affected, or fewer affected instances than the minimum leaf size),
4 timeout (partial front still written).

Input files
-----------
Schema JSON::

    {"features": [
      {"name": "income", "kind": "numeric", "actionability": "increase_only",
       "bins": 10, "max_bin_shift": 9},
      {"name": "job", "kind": "categorical", "categories": ["a", "b"],
       "actionability": "free"},
      {"name": "owner", "kind": "binary", "actionability": "immutable"}
    ]}

``kind`` is numeric, categorical or binary; ``actionability`` is free,
immutable, increase_only or decrease_only (numeric only). ``bins`` and
``max_bin_shift`` are optional (defaults 10 and bins - 1).

Predictor spec (``--predictor``): ``logistic`` trains a logistic model on the
label column; ``rules:PATH`` loads a rule file; ``cmd:COMMAND`` starts an
external process speaking the batch CSV protocol.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from .actions import ActionSetTooLarge
from .cache import CacheTooLarge
from .evaluation import (
    EvaluationError,
    audit,
    evaluate,
    metrics_row,
    write_metrics_csv,
)
from .pipeline import RecourseContext, build_context, prepare
from .predictor import (
    LogisticConfig,
    LogisticPredictor,
    PredictorError,
    RulePredictor,
    external_predictor,
    load_rule_predictor,
    train_logistic,
)
from .schema import FeatureSchema, SchemaError, load_dataset, load_schema
from .solver import RecourseSummaryTree, SolverConfig, solve
from .synth import generate, german_like, load_spec, SynthBundle

logger = logging.getLogger("recourse_trees")

FRONT_FORMAT = "recourse-trees-front/1"
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_TIMEOUT = 0, 2, 3, 4


class ConfigError(Exception):
    pass


_STAGE_ERRORS = (SchemaError, PredictorError, EvaluationError, ActionSetTooLarge, CacheTooLarge,
                 ValueError, OSError)


@contextmanager
def stage(name: str):
    """Prefix any pipeline error raised inside the block with the stage name."""
    try:
        yield
    except ConfigError as e:
        raise ConfigError(f"[{name}] {e}") from e
    except _STAGE_ERRORS as e:
        raise ConfigError(f"[{name}] {type(e).__name__}: {e}") from e


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _has_column(path, name: str | None) -> bool:
    if not name:
        return False
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return name in (h.strip() for h in header)


def _load(path, schema, label_column):
    return load_dataset(path, schema, label_column if _has_column(path, label_column) else None)


def make_predictor(spec: str, train, schema: FeatureSchema, seed: int = 0):
    if spec == "logistic":
        if train.labels is None:
            raise ConfigError("the logistic predictor needs a label column in the training data")
        return train_logistic(train, config=LogisticConfig(seed=seed))
    if spec.startswith("rules:"):
        return load_rule_predictor(spec[len("rules:"):], schema)
    if spec.startswith("cmd:"):
        return external_predictor(spec[len("cmd:"):], schema)
    raise ConfigError(f"unknown predictor spec {spec!r} (use logistic, rules:PATH or cmd:COMMAND)")


def predictor_from_description(doc: dict, schema: FeatureSchema):
    kind = doc.get("kind")
    if kind == "logistic":
        return LogisticPredictor.from_dict(schema, doc)
    if kind == "rules":
        return RulePredictor(schema, doc["rules"], doc["default"])
    if kind == "external":
        return external_predictor(doc["command"], schema)
    raise ConfigError(f"front file names an unknown predictor kind {kind!r}")


# --------------------------------------------------------------------------
# front file


def front_document(result, ctx: RecourseContext, run: dict) -> dict:
    """Deterministic JSON description of a solve: no timings, no thread counts."""
    denom = result.denominator
    n0 = result.n_affected
    solutions = []
    for s, (v, tree) in enumerate(result.front):
        cost_mean = v.cost / denom / n0
        loss_mean = v.loss / n0
        solutions.append({
            "index": s,
            "v_C": v.cost / denom,
            "v_C_numerator": v.cost,
            "v_L": v.loss,
            "cost_mean": cost_mean,
            "loss_mean": loss_mean,
            "invalidity": cost_mean + loss_mean,
            "n_leaves": len(tree.leaves()),
            "depth": tree.depth,
            "tree": tree.to_dict(ctx.schema, ctx.predicates, ctx.actions),
            "text": tree.render(ctx.schema, ctx.predicates, ctx.actions),
        })
    return {
        "format": FRONT_FORMAT,
        "status": result.status,
        "run": run,
        "schema": ctx.schema.to_dict(),
        "schema_sha256": ctx.schema.fingerprint(),
        "actions_sha256": ctx.actions.fingerprint(),
        "n_actions": len(ctx.actions),
        "n_predicates": len(ctx.predicates),
        "predictor": ctx.predictor.describe(),
        "denominator": denom,
        "n_affected": n0,
        "solutions": solutions,
    }


def write_front_files(out: Path, doc: dict, stats: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "front.json").write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    cols = ["index", "v_C", "v_L", "cost_mean", "loss_mean", "invalidity", "n_leaves", "depth"]
    with open(out / "front.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in doc["solutions"]:
            w.writerow([repr(s[c]) if isinstance(s[c], float) else s[c] for c in cols])


def load_front(path):
    """Rebuild the training context of a front file.

    Returns ``(document, context, trees)``. The training data is re-read from
    the recorded path and must still hash to the recorded digest.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read front file {path}: {e}") from None
    if doc.get("format") != FRONT_FORMAT:
        raise ConfigError(f"{path}: not a front file")
    schema = FeatureSchema.from_dict(doc["schema"])
    if schema.fingerprint() != doc["schema_sha256"]:
        raise ConfigError(f"{path}: schema hash mismatch")
    run = doc["run"]
    data_path = run["data"]
    if not Path(data_path).exists():
        raise ConfigError(f"training data {data_path} recorded in the front file is missing")
    if sha256_file(data_path) != run["data_sha256"]:
        raise ConfigError(f"training data {data_path} changed since the front was computed (hash mismatch)")
    train = _load(data_path, schema, run.get("label_column"))
    predictor = predictor_from_description(doc["predictor"], schema)
    ctx = build_context(train, predictor, run["sparsity"], max_actions=None)
    if ctx.actions.fingerprint() != doc["actions_sha256"]:
        raise ConfigError(f"{path}: action set hash mismatch")
    trees = [RecourseSummaryTree.from_dict(s["tree"]) for s in doc["solutions"]]
    return doc, ctx, trees


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    with stage("ingest"):
        schema = load_schema(args.schema)
        if args.bins is not None:
            if args.bins < 2:
                raise ConfigError("--bins must be >= 2")
            schema = schema.with_bins(args.bins)
        train = _load(args.data, schema, args.label_column)
    with stage("predictor"):
        predictor = make_predictor(args.predictor, train, schema, args.seed)
    with stage("config"):
        config = SolverConfig(
            max_depth=args.depth,
            max_nodes=args.max_nodes,
            min_leaf_size=args.min_leaf,
            timeout=args.timeout,
            threads=args.threads,
        )
    with stage("prepare"):
        prep = prepare(train, predictor, k=args.sparsity, threads=args.threads)
    run = {
        "data": str(args.data),
        "data_sha256": sha256_file(args.data),
        "label_column": args.label_column,
        "depth": config.max_depth,
        "max_nodes": config.max_nodes,
        "min_leaf": config.min_leaf_size,
        "sparsity": args.sparsity,
        "bins": args.bins,
        "seed": args.seed,
    }
    out = Path(args.out)
    if prep.cache is None:
        logger.error("infeasible: the classifier labels every instance 1, nobody is affected")
        write_front_files(out, {**_empty_doc(prep.context, run), "status": "infeasible"},
                          {"status": "infeasible", "n_affected": 0})
        return EXIT_INFEASIBLE
    with stage("solve"):
        result = solve(prep.cache, prep.view, config)
    doc = front_document(result, prep.context, run)
    stats = {
        "status": result.status,
        "n_affected": result.n_affected,
        "n_actions": len(prep.context.actions),
        "n_predicates": len(prep.context.predicates),
        "front_size": len(result.front),
        "threads": args.threads,
        **result.stats.to_dict(),
    }
    write_front_files(out, doc, stats)
    if result.status == "infeasible":
        logger.error("infeasible: %d affected instances, minimum leaf size %d",
                     result.n_affected, config.min_leaf_size)
        return EXIT_INFEASIBLE
    for s in doc["solutions"]:
        print(f"{s['index']}\tcost={s['cost_mean']:.4f}\tloss={s['loss_mean']:.4f}\t"
              f"invalidity={s['invalidity']:.4f}")
    if result.status == "timed_out":
        logger.warning("timed out after %.1fs; wrote %d nondominated solutions found so far",
                       result.stats.wall_time, len(result.front))
        return EXIT_TIMEOUT
    return EXIT_OK


def _empty_doc(ctx, run):
    return {
        "format": FRONT_FORMAT,
        "run": run,
        "schema": ctx.schema.to_dict(),
        "schema_sha256": ctx.schema.fingerprint(),
        "actions_sha256": ctx.actions.fingerprint(),
        "predictor": ctx.predictor.describe(),
        "solutions": [],
    }


def cmd_evaluate(args) -> int:
    doc, ctx, trees = load_front(args.front)
    data = _load(args.data, ctx.schema, doc["run"].get("label_column"))
    rows = []
    for s, tree in enumerate(trees):
        m = evaluate(tree, data, ctx)
        rows.append(metrics_row(s, m, args.split))
        print(f"{s}\tcost={m.cost:.4f}\tloss={m.loss:.4f}\tinvalidity={m.invalidity:.4f}\tn={m.n}")
    out = Path(args.out) if args.out else Path(args.front).with_name(f"metrics_{args.split}.csv")
    write_metrics_csv(out, rows)
    return EXIT_OK


def cmd_audit(args) -> int:
    doc, ctx, trees = load_front(args.front)
    data = _load(args.data, ctx.schema, doc["run"].get("label_column"))
    report = audit(trees, data, args.group, ctx)
    out = Path(args.out) if args.out else Path(args.front).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "audit.json").write_text(report.to_json() + "\n")
    (out / "audit.md").write_text(report.to_markdown())
    rows = []
    for sol in report.per_solution:
        for g in (report.disadvantaged, report.advantaged):
            e = sol[g]
            rows.append({
                "solution_index": sol["solution_index"],
                "cost_mean": repr(e["cost"]),
                "loss_mean": repr(e["loss"]),
                "invalidity": repr(e["invalidity"]),
                "split": args.split,
                "group": g,
            })
    write_metrics_csv(out / "audit_metrics.csv", rows)
    print(report.to_markdown())
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    spec = load_spec(args.spec)
    if spec.get("preset") == "german":
        data = german_like(int(spec.get("n", 1000)), int(spec.get("seed", 0)))
        bundle = SynthBundle(data, rules=None, label_column=spec.get("label_column", "label"))
    else:
        bundle = generate(spec)
    paths = bundle.write(args.out)
    for name, p in paths.items():
        print(f"{name}\t{p}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recourse-trees", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="compute the Pareto front of recourse summary trees")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--predictor", default="logistic", help="logistic | rules:PATH | cmd:COMMAND")
    s.add_argument("--label-column", default="label")
    s.add_argument("--depth", type=int, default=3)
    s.add_argument("--max-nodes", type=int, default=7)
    s.add_argument("--min-leaf", type=int, default=50)
    s.add_argument("--sparsity", type=int, default=3)
    s.add_argument("--timeout", type=float, default=None, help="seconds")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--bins", type=int, default=None, help="override bins of every numeric feature")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="metrics of every front tree on a population")
    e.add_argument("--front", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=["train", "test"])
    e.add_argument("--out", default=None, help="metrics CSV path")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("audit", help="per-group recourse and classifier fairness report")
    a.add_argument("--front", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--group", required=True)
    a.add_argument("--split", default="test", choices=["train", "test"])
    a.add_argument("--out", default=None, help="output directory")
    a.set_defaults(func=cmd_audit)

    g = sub.add_parser("gen-synth", help="write a synthetic population with a planted rule")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, *_STAGE_ERRORS) as e:
        logger.error("%s: %s", args.command, e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
