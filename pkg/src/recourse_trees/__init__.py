"""Exact Pareto fronts of recourse summary trees.

Typical use::

    from recourse_trees import load_schema, load_dataset, train_logistic, run, SolverConfig

    schema = load_schema("schema.json")
    train = load_dataset("train.csv", schema, label_column="label")
    prep, result = run(train, train_logistic(train), SolverConfig(max_depth=3, min_leaf_size=50))
    for value, tree in result.front:
        print(value, tree.render(schema, prep.context.predicates, prep.context.actions))
"""

from .actions import Action, ActionSet, Edit, apply_action, generate_action_set, generate_single_edits
from .cache import (
    CacheMatrix,
    best_leaf_solutions,
    build_cache,
    leaf_value,
    load_cache,
    mps_cost,
    recourse_loss,
    save_cache,
)
from .evaluation import (
    AuditReport,
    SummaryMetrics,
    audit,
    degradation,
    evaluate,
    fairness_metrics,
    generalization_distance,
    route,
)
from .kernels import BACKEND
from .pareto import CostLossPair, ParetoArchive, combine, dominates, merge, nondom
from .pipeline import RecourseContext, build_context, prepare, run
from .predictor import (
    ConstantPredictor,
    Predictor,
    external_predictor,
    load_rule_predictor,
    train_logistic,
)
from .schema import (
    BinarizedView,
    Dataset,
    EmpiricalCdf,
    FeatureSchema,
    FeatureSpec,
    binarize,
    compute_affected,
    fit_cdfs,
    load_dataset,
    load_schema,
)
from .solver import (
    RecourseSummaryTree,
    SolveResult,
    SolverConfig,
    State,
    brute_force_solve,
    lower_bound,
    solve,
    transition,
)

__version__ = "0.1.0"
