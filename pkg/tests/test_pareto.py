import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recourse_trees.pareto import CostLossPair, ParetoArchive, combine, dominates, merge, nondom

from _util import pareto_oracle, weakly_dominated

point = st.tuples(st.integers(0, 30), st.integers(0, 30))
points = st.lists(point, max_size=25)


def archive(pts):
    return nondom((p, i) for i, p in enumerate(pts))


def test_dominates_examples():
    assert dominates((1, 2), (2, 3))
    assert dominates((1, 2), (1, 3))
    assert not dominates((1, 3), (2, 2))
    assert not dominates((1, 2), (1, 2))


def test_pair_addition_is_componentwise():
    assert CostLossPair(1, 2) + CostLossPair(3, 4) == (4, 6)
    assert combine((0.5, 1), (0.25, 0)) == (0.75, 1)


def test_nondom_example():
    assert archive([(1, 5), (2, 3), (3, 4), (4, 1), (2, 3)]).values() == [(1, 5), (2, 3), (4, 1)]


def test_nondom_empty():
    assert len(nondom([])) == 0 and not nondom([])


def test_merge_example():
    left, right = archive([(0, 5), (2, 0)]), archive([(0, 4), (1, 0)])
    # cross sums: (0,9) (1,5) (2,4) (3,0)
    assert merge(left, right).values() == [(0, 9), (1, 5), (2, 4), (3, 0)]


def test_merge_with_empty_is_empty():
    assert len(merge(archive([(1, 1)]), ParetoArchive())) == 0


def test_tie_key_picks_smallest_payload():
    out = nondom([((1, 1), "b"), ((1, 1), "a")], tie_key=lambda p: p)
    assert out.payloads() == ["a"]
    assert nondom([((1, 1), "b"), ((1, 1), "a")]).payloads() == ["b"]


@settings(max_examples=400, deadline=None)
@given(points)
def test_nondom_laws(pts):
    front = archive(pts).values()
    assert [tuple(v) for v in front] == pareto_oracle(pts)
    for v in front:
        assert not any(dominates(w, v) for w in front)
    for p in pts:
        assert weakly_dominated(p, front)
    assert archive(front).values() == front  # idempotent
    costs = [v[0] for v in front]
    losses = [v[1] for v in front]
    assert costs == sorted(set(costs)) and losses == sorted(set(losses), reverse=True)


@settings(max_examples=300, deadline=None)
@given(points, points)
def test_nondom_union_absorbs(a, b):
    whole = archive(a + b).values()
    staged = archive(archive(a).values() + b).values()
    assert whole == staged


@settings(max_examples=300, deadline=None)
@given(points, points, points)
def test_merge_laws(a, b, c):
    A, B, C = archive(a), archive(b), archive(c)
    assert merge(A, B).values() == merge(B, A).values()
    assert merge(merge(A, B), C).values() == merge(A, merge(B, C)).values()
    sums = [(x[0] + y[0], x[1] + y[1]) for x in a for y in b]
    assert [tuple(v) for v in merge(A, B).values()] == pareto_oracle(sums)


@settings(max_examples=200, deadline=None)
@given(points)
def test_merge_with_zero_is_identity(a):
    A = archive(a)
    assert merge(A, archive([(0, 0)])).values() == A.values()
