"""Glue for the full run: data -> affected set -> binarization -> actions -> cache -> front."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .actions import DEFAULT_MAX_ACTIONS, ActionSet, generate_action_set
from .cache import DEFAULT_MEMORY_CAP, CacheMatrix, build_cache
from .schema import (
    BinarizedView,
    Binning,
    Dataset,
    EmpiricalCdf,
    Predicate,
    binarize,
    compute_affected,
    fit_binning,
    fit_cdfs,
    make_predicates,
)
from .solver import SolveResult, SolverConfig, solve

logger = logging.getLogger(__name__)


@dataclass
class RecourseContext:
    """Everything fixed at training time: binning, CDFs, actions, predicates, classifier."""

    schema: object
    binning: Binning
    cdfs: EmpiricalCdf
    actions: ActionSet
    predicates: list[Predicate]
    predictor: object


def build_context(train: Dataset, predictor, k: int = 3, max_actions: int | None = DEFAULT_MAX_ACTIONS):
    binning = fit_binning(train)
    return RecourseContext(
        schema=train.schema,
        binning=binning,
        cdfs=fit_cdfs(train),
        actions=generate_action_set(train.schema, k, binning, max_actions),
        predicates=make_predicates(train.schema, binning),
        predictor=predictor,
    )


@dataclass
class Prepared:
    context: RecourseContext
    affected: np.ndarray
    view: BinarizedView
    cache: CacheMatrix


def prepare(
    train: Dataset,
    predictor,
    k: int = 3,
    threads: int = 1,
    max_actions: int | None = DEFAULT_MAX_ACTIONS,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> Prepared:
    ctx = build_context(train, predictor, k, max_actions)
    affected = compute_affected(train, predictor)
    logger.info("%d of %d instances affected; %d actions", affected.size, train.n, len(ctx.actions))
    view = binarize(train, affected, ctx.binning)
    if affected.size == 0:
        return Prepared(ctx, affected, view, None)
    cache = build_cache(
        train.X[affected], ctx.actions, predictor, ctx.cdfs, ctx.binning,
        affected=affected, threads=threads, memory_cap=memory_cap,
    )
    return Prepared(ctx, affected, view, cache)


def run(train: Dataset, predictor, config: SolverConfig, k: int = 3, **kw) -> tuple[Prepared, SolveResult]:
    prep = prepare(train, predictor, k=k, threads=config.threads, **kw)
    if prep.cache is None:
        raise ValueError("no affected instances: the classifier assigns class 1 to everyone")
    return prep, solve(prep.cache, prep.view, config)
