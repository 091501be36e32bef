import itertools

import numpy as np
import pytest

from recourse_trees import kernels
from recourse_trees.cache import CacheMatrix
from recourse_trees.schema import BinarizedView
from recourse_trees.solver import (
    Branch,
    Leaf,
    RecourseSummaryTree,
    SolverConfig,
    State,
    brute_force_solve,
    lower_bound,
    solve,
    transition,
)

from _util import random_problem, weakly_dominated


def values(archive):
    return [tuple(v) for v in archive.values()]


def check_witnesses(result, cache, view, cfg):
    for v, tree in result.front:
        assert tree.value(cache, view.bits) == v
        assert tree.depth <= cfg.max_depth and tree.n_branches <= cfg.max_nodes
        assert tree.leaf_sizes(view.bits).min() >= cfg.min_leaf_size


# -- configuration and small cases


@pytest.mark.parametrize("kw", [dict(max_depth=-1), dict(max_depth=2, max_nodes=4),
                                dict(min_leaf_size=0), dict(threads=0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_config_default_nodes():
    assert SolverConfig(max_depth=3).max_nodes == 7


def test_depth_zero_is_best_leaf():
    cost = np.array([[0, 4, 9], [0, 4, 1]], np.int32)
    loss = np.array([[1, 0, 0], [1, 1, 0]], np.uint8)
    cache = CacheMatrix(cost, loss, 10, np.arange(2))
    view = BinarizedView([None], np.array([[0], [1]], np.uint8), np.arange(2))
    res = solve(cache, view, SolverConfig(max_depth=0))
    # leaves: a0 (0,2), a1 (8,1), a2 (10,0)
    assert values(res.front) == [(0, 2), (8, 1), (10, 0)]
    assert res.status == "complete"
    # one split: null on row 0 + a2 on row 1 -> (1, 1); a1 on row 0 + a2 on row 1 -> (5, 0)
    res1 = solve(cache, view, SolverConfig(max_depth=1))
    assert values(res1.front) == [(0, 2), (1, 1), (5, 0)]
    assert res1.trees()[-1] == RecourseSummaryTree(Branch(0, Leaf(1), Leaf(2)))


def test_null_only_action_set():
    n = 7
    cache = CacheMatrix(np.zeros((n, 1), np.int32), np.ones((n, 1), np.uint8), n, np.arange(n))
    view = BinarizedView([None] * 2, np.random.default_rng(0).integers(0, 2, (n, 2)).astype(np.uint8), np.arange(n))
    res = solve(cache, view, SolverConfig(max_depth=2))
    assert values(res.front) == [(0, n)]


def test_infeasible_when_population_below_min_leaf():
    cache, view = random_problem(np.random.default_rng(0), n_max=3)
    res = solve(cache, view, SolverConfig(max_depth=1, min_leaf_size=10))
    assert res.status == "infeasible" and len(res.front) == 0


def test_min_leaf_blocks_small_splits():
    rng = np.random.default_rng(3)
    cache, view = random_problem(rng, n_max=20)
    cfg = SolverConfig(max_depth=2, min_leaf_size=cache.n_instances)
    res = solve(cache, view, cfg)
    assert all(t.n_branches == 0 for t in res.trees())


# -- transition and bound


def test_transition_examples():
    bits = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], np.uint8)
    s0 = State(tuple(range(4)))
    assert transition(s0, 0, "pass", bits) == State((1, 2), frozenset({0}))
    assert transition(s0, 0, "fail", bits) == State((0, 3), frozenset({0}))
    s1 = transition(s0, 0, "pass", bits)
    assert transition(s1, 1, "fail", bits).instances == (2,)
    with pytest.raises(ValueError):
        transition(s1, 0, "pass", bits)
    assert transition(State(()), 1, "pass", bits).instances == ()


def test_lower_bound_is_valid():
    rng = np.random.default_rng(5)
    for _ in range(50):
        cache, view = random_problem(rng)
        res = solve(cache, view, SolverConfig(max_depth=2))
        lb = lower_bound(State(tuple(range(cache.n_instances))), cache, 2, 3)
        for c, l in res.front.values():
            assert lb[0] <= c and lb[1] <= l


# -- equivalence with the exhaustive oracle


@pytest.mark.parametrize("seed", range(40))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cache, view = random_problem(rng)
    d = int(rng.integers(0, 3))
    cfg = SolverConfig(max_depth=d, max_nodes=int(rng.integers(0, 2**d)), min_leaf_size=int(rng.integers(1, 5)))
    res = solve(cache, view, cfg)
    assert values(res.front) == values(brute_force_solve(cache, view, cfg))
    check_witnesses(res, cache, view, cfg)


def test_backends_and_prune_agree():
    rng = np.random.default_rng(11)
    py = kernels.load("python")
    for _ in range(20):
        cache, view = random_problem(rng)
        cfg = SolverConfig(max_depth=2)
        a = solve(cache, view, cfg)
        b = solve(cache, view, cfg, backend=py)
        c = solve(cache, view, SolverConfig(max_depth=2, prune=False))
        assert values(a.front) == values(b.front) == values(c.front)
        assert [t.canonical_key() for t in a.trees()] == [t.canonical_key() for t in b.trees()]


def test_threads_identical_trees():
    rng = np.random.default_rng(12)
    for _ in range(10):
        cache, view = random_problem(rng, p_max=8)
        one = solve(cache, view, SolverConfig(max_depth=3, threads=1))
        many = solve(cache, view, SolverConfig(max_depth=3, threads=8))
        assert values(one.front) == values(many.front)
        assert one.trees() == many.trees()


def test_depth_three_against_enumeration():
    # small enough to enumerate every depth-3 tree by composing depth-2 fronts by hand
    rng = np.random.default_rng(13)
    for _ in range(5):
        cache, view = random_problem(rng, n_max=12, p_max=3, a_max=4)
        cfg = SolverConfig(max_depth=3)
        res = solve(cache, view, cfg)
        pts = []
        P = view.bits.shape[1]

        def trees(depth):
            yield Leaf
            if depth:
                for p in range(P):
                    for l, r in itertools.product(list(trees(depth - 1)), repeat=2):
                        yield (p, l, r)

        def leaves(shape, rows, out):
            if shape is Leaf:
                out.append(rows)
                return
            p, l, r = shape
            leaves(l, [i for i in rows if view.bits[i, p] == 0], out)
            leaves(r, [i for i in rows if view.bits[i, p] == 1], out)

        for shape in trees(3):
            groups = []
            leaves(shape, list(range(cache.n_instances)), groups)
            if any(not g for g in groups):
                continue
            for acts in itertools.product(range(cache.n_actions), repeat=len(groups)):
                pts.append((sum(int(cache.cost_num[i, a]) for g, a in zip(groups, acts) for i in g),
                            sum(int(cache.loss[i, a]) for g, a in zip(groups, acts) for i in g)))
        oracle = sorted(p for p in set(pts) if not any(
            q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts))
        assert values(res.front) == oracle
        check_witnesses(res, cache, view, cfg)


# -- structure


@pytest.mark.parametrize("seed", range(10))
def test_monotone_in_depth_and_nodes(seed):
    rng = np.random.default_rng(100 + seed)
    cache, view = random_problem(rng)
    shallow = solve(cache, view, SolverConfig(max_depth=1)).front.values()
    deep = solve(cache, view, SolverConfig(max_depth=2)).front.values()
    assert all(weakly_dominated(p, deep) for p in shallow)
    for m in range(3):
        small = solve(cache, view, SolverConfig(max_depth=2, max_nodes=m)).front.values()
        big = solve(cache, view, SolverConfig(max_depth=2, max_nodes=m + 1)).front.values()
        assert all(weakly_dominated(p, big) for p in small)


def test_front_contains_null_anchor():
    rng = np.random.default_rng(7)
    cache, view = random_problem(rng)
    res = solve(cache, view, SolverConfig(max_depth=2))
    assert tuple(res.front.values()[0]) == (0, cache.n_instances)
    assert res.points()[0] == (0.0, cache.n_instances)


def test_timeout_returns_subset_of_achievable():
    rng = np.random.default_rng(8)
    n, P, A = 300, 40, 60
    cost = rng.integers(0, 300, (n, A)).astype(np.int32)
    cost[:, 0] = 0
    loss = rng.integers(0, 2, (n, A)).astype(np.uint8)
    loss[:, 0] = 1
    cache = CacheMatrix(cost, loss, n, np.arange(n))
    view = BinarizedView([None] * P, rng.integers(0, 2, (n, P)).astype(np.uint8), np.arange(n))
    res = solve(cache, view, SolverConfig(max_depth=3, timeout=0.05))
    assert res.status in ("timed_out", "complete")
    vals = res.front.values()
    assert vals and all(not any(w[0] <= v[0] and w[1] <= v[1] and w != v for w in vals) for v in vals)
    for v, tree in res.front:
        assert tree.value(cache, view.bits) == v


def test_tree_serialization_roundtrip():
    tree = RecourseSummaryTree(Branch(2, Leaf(0), Branch(1, Leaf(3), Leaf(4))))
    assert tree.depth == 2 and tree.n_branches == 2
    assert tree.leaf_actions().tolist() == [0, 3, 4]
    bits = np.array([[0, 0, 0], [0, 0, 1], [0, 1, 1]], np.uint8)
    assert tree.route_bits(bits).tolist() == [0, 1, 2]
