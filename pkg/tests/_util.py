"""Shared builders for the test suite."""

import numpy as np

from recourse_trees.cache import CacheMatrix
from recourse_trees.schema import BinarizedView, Dataset, FeatureSchema, FeatureSpec


def random_problem(rng, n_max=60, p_max=6, a_max=12, cost_max=50, denominator=50):
    """Random cache + bit matrix with the null action in column 0."""
    n = int(rng.integers(1, n_max + 1))
    P = int(rng.integers(1, p_max + 1))
    A = int(rng.integers(1, a_max + 1))
    cost = rng.integers(0, cost_max, (n, A))
    cost[:, 0] = 0
    loss = rng.integers(0, 2, (n, A))
    loss[:, 0] = 1
    bits = rng.integers(0, 2, (n, P)).astype(np.uint8)
    cache = CacheMatrix(cost.astype(np.int32), loss.astype(np.uint8), denominator, np.arange(n))
    return cache, BinarizedView([None] * P, bits, np.arange(n))


def mixed_schema(bins=5):
    return FeatureSchema((
        FeatureSpec("age", "numeric", "immutable", bins=bins),
        FeatureSpec("income", "numeric", "increase_only", bins=bins),
        FeatureSpec("debt", "numeric", "free", bins=bins, max_bin_shift=2),
        FeatureSpec("job", "categorical", "free", categories=("a", "b", "c")),
        FeatureSpec("owner", "binary", "free"),
    ))


def mixed_data(rng, n=80, bins=5):
    schema = mixed_schema(bins)
    X = np.column_stack([
        rng.integers(18, 70, n).astype(float),
        np.round(rng.uniform(0, 100, n), 1),
        np.round(rng.uniform(0, 20, n), 2),
        rng.integers(0, 3, n).astype(float),
        rng.integers(0, 2, n).astype(float),
    ])
    labels = (X[:, 1] + 3 * X[:, 4] - X[:, 2] > 45).astype(int)
    return Dataset(schema, X, labels)


def pareto_oracle(points):
    """Quadratic nondominated filter over (cost, loss) tuples, duplicates collapsed."""
    pts = set(points)
    keep = [p for p in pts if not any(
        q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts)]
    return sorted(keep)


def weakly_dominated(p, front):
    return any(q[0] <= p[0] and q[1] <= p[1] for q in front)
