"""Exact bi-objective dynamic program over recourse summary trees.

``T(S, d, b)`` is the nondominated set of (cost, loss) values reachable by
trees of depth at most ``d`` with at most ``b`` branch nodes over the
affected subset ``S``:

* a single leaf is always a candidate (one shared action for all of ``S``),
* for ``d > 0`` and ``b > 0`` every predicate splitting ``S`` into two
  feasible children contributes the nondominated cross sums of the child
  fronts, for every split of the remaining budget between the children.

Fronts are computed on exact integers (cost numerators and loss counts) and
memoized on ``(S, d, b)``. The depth-one level is vectorized: one matrix
product yields the leaf sums of both children for every predicate at once.
Equal-value candidates keep the first one in canonical enumeration order
(leaf before branches, predicates ascending, budget splits ascending, then
child front positions), which makes results independent of scheduling.
"""

from __future__ import annotations

import itertools
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from . import kernels
from .cache import CacheMatrix
from .pareto import CostLossPair, ParetoArchive
from .schema import BinarizedView

INF = np.iinfo(np.int64).max


# --------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Leaf:
    action: int


@dataclass(frozen=True)
class Branch:
    """``left`` receives instances failing the predicate (bit 0), ``right`` the rest."""

    predicate: int
    left: "Node"
    right: "Node"


Node = Union[Leaf, Branch]


class RecourseSummaryTree:
    def __init__(self, root: Node):
        self.root = root

    def __eq__(self, other):
        return isinstance(other, RecourseSummaryTree) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __repr__(self):
        return f"RecourseSummaryTree({self.root!r})"

    @property
    def depth(self) -> int:
        def walk(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    @property
    def n_branches(self) -> int:
        def walk(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + walk(node.left) + walk(node.right)

        return walk(self.root)

    def leaves(self) -> list[Leaf]:
        out = []

        def walk(node):
            if isinstance(node, Leaf):
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def leaf_actions(self) -> np.ndarray:
        return np.array([leaf.action for leaf in self.leaves()], dtype=np.int64)

    def predicates(self) -> list[int]:
        out = []

        def walk(node):
            if isinstance(node, Branch):
                out.append(node.predicate)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def canonical_key(self) -> tuple:
        return (tuple(int(a) for a in self.leaf_actions()), tuple(self.predicates()))

    def route_with(self, test, n: int) -> np.ndarray:
        """Leaf id (left-to-right order) per row; ``test(p)`` gives predicate ``p``'s bits."""
        out = np.empty(n, dtype=np.int64)
        counter = itertools.count()

        def walk(node, rows):
            if isinstance(node, Leaf):
                out[rows] = next(counter)
                return
            bit = test(node.predicate)[rows]
            walk(node.left, rows[bit == 0])
            walk(node.right, rows[bit != 0])

        walk(self.root, np.arange(n))
        return out

    def route_bits(self, bits: np.ndarray) -> np.ndarray:
        """Route rows of a predicate bit matrix; returns leaf ids."""
        bits = np.asarray(bits)
        return self.route_with(lambda p: bits[:, p], bits.shape[0])

    def route(self, X: np.ndarray, predicates) -> np.ndarray:
        """Route encoded instances through the original-feature tests."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.route_with(lambda p: predicates[p].holds(X), X.shape[0])

    def assigned_actions(self, leaf_ids: np.ndarray) -> np.ndarray:
        return self.leaf_actions()[leaf_ids]

    def value(self, cache: CacheMatrix, bits: np.ndarray) -> CostLossPair:
        """Re-evaluate from scratch: route the bit matrix, sum cached cells."""
        acts = self.assigned_actions(self.route_bits(bits))
        rows = np.arange(cache.n_instances)
        return CostLossPair(
            int(cache.cost_num[rows, acts].sum(dtype=np.int64)),
            int(cache.loss[rows, acts].sum(dtype=np.int64)),
        )

    def leaf_sizes(self, bits: np.ndarray) -> np.ndarray:
        return np.bincount(self.route_bits(bits), minlength=len(self.leaves()))

    def to_dict(self, schema, predicates, actions) -> dict:
        def walk(node):
            if isinstance(node, Leaf):
                return {"kind": "leaf", "action": actions[node.action].to_dict(schema)}
            pred = predicates[node.predicate]
            return {
                "kind": "branch",
                "predicate": {**pred.to_dict(schema), "index": node.predicate,
                              "text": pred.describe(schema)},
                "children": [walk(node.left), walk(node.right)],
            }

        return walk(self.root)

    @classmethod
    def from_dict(cls, doc: dict) -> "RecourseSummaryTree":
        def walk(d):
            if d["kind"] == "leaf":
                return Leaf(int(d["action"]["index"]))
            left, right = d["children"]
            return Branch(int(d["predicate"]["index"]), walk(left), walk(right))

        return cls(walk(doc))

    def render(self, schema, predicates, actions, indent: str = "") -> str:
        lines = []

        def walk(node, pad):
            if isinstance(node, Leaf):
                lines.append(f"{pad}-> {actions[node.action].render(schema)}")
            else:
                text = predicates[node.predicate].describe(schema)
                lines.append(f"{pad}if not ({text}):")
                walk(node.left, pad + "    ")
                lines.append(f"{pad}else:  # {text}")
                walk(node.right, pad + "    ")

        walk(self.root, indent)
        return "\n".join(lines)


# --------------------------------------------------------------------------
# configuration, states, results


class InfeasibleError(ValueError):
    pass


@dataclass
class SolverConfig:
    max_depth: int = 3
    max_nodes: int | None = None  # None: 2**max_depth - 1
    min_leaf_size: int = 1
    timeout: float | None = None  # seconds of wall clock
    threads: int = 1
    prune: bool = True

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        full = 2**self.max_depth - 1
        if self.max_nodes is None:
            self.max_nodes = full
        if not 0 <= self.max_nodes <= full:
            raise ValueError(f"max_nodes must lie in [0, {full}] for depth {self.max_depth}")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class State:
    instances: tuple[int, ...]
    used: frozenset = frozenset()


def transition(state: State, predicate: int, side: str, bits: np.ndarray) -> State:
    """Child state on the ``"fail"`` (bit 0) or ``"pass"`` (bit 1) side of ``predicate``."""
    if side not in ("fail", "pass"):
        raise ValueError("side must be 'fail' or 'pass'")
    if predicate in state.used:
        raise ValueError("predicate already used by an ancestor")
    want = 1 if side == "pass" else 0
    idx = np.asarray(state.instances, dtype=np.int64)
    keep = idx[bits[idx, predicate] == want] if idx.size else idx
    return State(tuple(int(i) for i in keep), state.used | {predicate})


def lower_bound(state: State, cache: CacheMatrix, depth: int = 0, budget: int = 0) -> CostLossPair:
    """Per-instance relaxation: every instance takes its own cheapest cell.

    Holds for any depth and budget, since no tree can beat each instance
    picking its individually best action on each objective separately.
    """
    idx = np.asarray(state.instances, dtype=np.int64)
    return CostLossPair(
        int(cache.cost_num[idx].min(axis=1).sum(dtype=np.int64)) if idx.size else 0,
        int(cache.loss[idx].min(axis=1).sum(dtype=np.int64)) if idx.size else 0,
    )


@dataclass
class SolveStats:
    subproblems: int = 0
    cache_hits: int = 0
    pruned: int = 0
    duplicate_splits: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "subproblems": self.subproblems,
            "cache_hits": self.cache_hits,
            "pruned": self.pruned,
            "duplicate_splits": self.duplicate_splits,
            "wall_time": round(self.wall_time, 6),
        }


@dataclass
class SolveResult:
    """Front entries are ``(CostLossPair(cost numerator, loss), tree)`` sorted by cost.

    Divide costs by ``denominator`` for real MPS sums.
    """

    front: ParetoArchive
    status: str  # "complete" | "timed_out" | "infeasible"
    stats: SolveStats
    denominator: int
    n_affected: int

    def points(self) -> list[tuple[float, int]]:
        return [(v.cost / self.denominator, v.loss) for v in self.front.values()]

    def trees(self) -> list[RecourseSummaryTree]:
        return self.front.payloads()


# --------------------------------------------------------------------------
# internal fronts


class _Front:
    """Integer front in ascending-loss order with lazily built witnesses."""

    __slots__ = ("cost", "loss", "prov", "complete")

    def __init__(self, cost, loss, prov, complete=True):
        self.cost = cost
        self.loss = loss
        self.prov = prov
        self.complete = complete

    def __len__(self):
        return self.cost.size

    def node(self, k: int) -> Node:
        p = self.prov[k]
        if p[0] == "leaf":
            return Leaf(int(p[1]))
        pred, lref, rref = p
        return Branch(int(pred), _resolve(lref), _resolve(rref))


def _resolve(ref) -> Node:
    owner, pos = ref
    if owner is None:
        return Leaf(int(pos))
    return owner.node(pos)


_EMPTY = _Front(np.empty(0, np.int64), np.empty(0, np.int64), [], True)


class _Acc:
    """Loss-indexed bucket accumulator: best cost per loss value with provenance."""

    __slots__ = ("cost", "tag", "i", "j")

    def __init__(self, n: int):
        self.cost = np.full(n + 1, INF, dtype=np.int64)
        self.tag = np.full(n + 1, -2, dtype=np.int64)
        self.i = np.zeros(n + 1, dtype=np.int64)
        self.j = np.zeros(n + 1, dtype=np.int64)

    @property
    def arrays(self):
        return self.cost, self.tag, self.i, self.j

    def strictly_dominates(self, c: int, l: int) -> bool:
        """Does some accumulated point strictly dominate ``(c, l)``?"""
        l = min(l, self.cost.size - 1)
        if l > 0 and self.cost[:l].min() <= c:
            return True
        return bool(self.cost[l] < c)


class _Solver:
    def __init__(self, cache: CacheMatrix, view: BinarizedView, config: SolverConfig, backend=None):
        if view.bits.shape[0] != cache.n_instances:
            raise ValueError("cache and binarized view cover different instance sets")
        self.k = kernels if backend is None else backend
        self.cfg = config
        self.n0 = cache.n_instances
        self.A = cache.n_actions
        self.cost_num = np.ascontiguousarray(cache.cost_num, dtype=np.int64)
        self.loss = np.ascontiguousarray(cache.loss, dtype=np.int64)
        self.work = np.hstack([self.cost_num, self.loss]).astype(np.float64)
        self.bits = np.ascontiguousarray(view.bits, dtype=np.uint8)
        self.bitsT = np.ascontiguousarray(self.bits.T)
        self.P = self.bits.shape[1]
        self.min_cost = self.cost_num.min(axis=1)
        self.min_loss = self.loss.min(axis=1)
        self.memo: dict = {}
        self.stats = SolveStats()
        self._lock = threading.Lock()
        self.deadline = None if config.timeout is None else time.monotonic() + config.timeout
        self.timed_out = False

    # -- helpers ---------------------------------------------------------

    def _count(self, name: str, k: int = 1):
        with self._lock:
            setattr(self.stats, name, getattr(self.stats, name) + k)

    def _expired(self) -> bool:
        if self.deadline is not None and not self.timed_out and time.monotonic() >= self.deadline:
            self.timed_out = True
        return self.timed_out

    def _key(self, idx: np.ndarray) -> bytes:
        mask = np.zeros(self.n0, dtype=bool)
        mask[idx] = True
        return np.packbits(mask).tobytes()

    def _split_candidates(self, idx: np.ndarray, used: frozenset) -> list[int]:
        """Predicates giving two children of size >= min leaf, one per distinct partition."""
        n, ell = idx.size, self.cfg.min_leaf_size
        sub = self.bits[idx]
        passes = sub.sum(axis=0, dtype=np.int64)
        ok = (passes >= ell) & (n - passes >= ell)
        seen = set()
        out = []
        for p in np.flatnonzero(ok):
            if p in used:
                continue
            col = sub[:, p]
            norm = col if col[0] == 0 else 1 - col
            sig = np.packbits(norm).tobytes()
            if sig in seen:
                self._count("duplicate_splits")
                continue
            seen.add(sig)
            out.append(int(p))
        return out

    def _budget_pairs(self, depth: int, budget: int) -> list[tuple[int, int]]:
        cap = 2 ** (depth - 1) - 1
        pairs = {(min(bl, cap), min(budget - 1 - bl, cap)) for bl in range(budget)}
        maximal = [
            pr for pr in pairs
            if not any(q != pr and q[0] >= pr[0] and q[1] >= pr[1] for q in pairs)
        ]
        return sorted(maximal)

    # -- levels ----------------------------------------------------------

    def leaf_front(self, idx: np.ndarray) -> _Front:
        key = (self._key(idx), 0, 0)
        hit = self.memo.get(key)
        if hit is not None:
            self._count("cache_hits")
            return hit
        self._count("subproblems")
        cost = self.cost_num[idx].sum(axis=0, dtype=np.int64)[None, :]
        loss = self.loss[idx].sum(axis=0, dtype=np.int64)[None, :]
        _, fc, fl, fa = self.k.row_fronts(cost, loss, idx.size)
        front = _Front(fc, fl, [("leaf", int(a)) for a in fa])
        self.memo[key] = front
        return front

    def solve(self, idx: np.ndarray, used: frozenset, depth: int, budget: int) -> _Front:
        if idx.size < self.cfg.min_leaf_size:
            return _EMPTY
        budget = min(budget, 2**depth - 1)
        if depth == 0 or budget == 0:
            return self.leaf_front(idx)
        key = (self._key(idx), depth, budget)
        hit = self.memo.get(key)
        if hit is not None:
            self._count("cache_hits")
            return hit
        if self._expired():
            leaf = self.leaf_front(idx)
            return _Front(leaf.cost, leaf.loss, leaf.prov, complete=False)
        self._count("subproblems")
        if depth == 1:
            front = self._solve_depth_one(idx, used)
        else:
            front = self._solve_general(idx, used, depth, budget)
        if front.complete:
            self.memo[key] = front
        return front

    def _finish(self, acc: _Acc, resolve, complete: bool) -> _Front:
        keep = self.k.finalize(acc.cost)
        prov = [resolve(int(acc.tag[l]), int(acc.i[l]), int(acc.j[l])) for l in keep]
        return _Front(acc.cost[keep].copy(), keep.astype(np.int64), prov, complete)

    def _solve_depth_one(self, idx: np.ndarray, used: frozenset) -> _Front:
        n = idx.size
        acc = _Acc(n)
        leaf = self.leaf_front(idx)
        self.k.push_into(*acc.arrays, leaf.cost, leaf.loss, -1)
        preds = self._split_candidates(idx, used)
        fa = None
        if preds:
            B = self.bits[np.ix_(idx, preds)].astype(np.float64)
            W = self.work[idx]
            # exact: every partial sum is an integer far below 2**53
            passed = B.T @ W
            failed = W.sum(axis=0) - passed
            V, A = len(preds), self.A
            cost2 = np.empty((2 * V, A), dtype=np.int64)
            loss2 = np.empty((2 * V, A), dtype=np.int64)
            cost2[0::2] = failed[:, :A]
            cost2[1::2] = passed[:, :A]
            loss2[0::2] = failed[:, A:]
            loss2[1::2] = passed[:, A:]
            offsets, fc, fl, fa = self.k.row_fronts(cost2, loss2, n)
            rows = np.arange(V, dtype=np.int64)
            self.k.merge_pairs_into(
                *acc.arrays, offsets, fc, fl, 2 * rows, 2 * rows + 1,
                np.asarray(preds, dtype=np.int64),
            )

        def resolve(tag, i, j):
            if tag == -1:
                return leaf.prov[i]
            return (tag, (None, int(fa[i])), (None, int(fa[j])))

        return self._finish(acc, resolve, True)

    def _children(self, idx, used, p, depth, pairs):
        col = self.bitsT[p, idx]
        left, right = idx[col == 0], idx[col == 1]
        child_used = used | {p}
        out = []
        for bl, br in pairs:
            fl = self.solve(left, child_used, depth - 1, bl)
            if not len(fl):
                continue
            fr = self.solve(right, child_used, depth - 1, br)
            if not len(fr):
                continue
            out.append((fl, fr))
        return out

    def _solve_general(self, idx, used, depth, budget, pool=None) -> _Front:
        n = idx.size
        acc = _Acc(n)
        leaf = self.leaf_front(idx)
        self.k.push_into(*acc.arrays, leaf.cost, leaf.loss, -1)
        preds = self._split_candidates(idx, used)
        pairs = self._budget_pairs(depth, budget)
        complete = True
        refs = []

        if self.cfg.prune:
            bound_c = int(self.min_cost[idx].sum())
            bound_l = int(self.min_loss[idx].sum())

        if pool is not None:
            futures = [pool.submit(self._children, idx, used, p, depth, pairs) for p in preds]
            results = iter(f.result() for f in futures)
        else:
            results = None

        for p in preds:
            if results is None and self._expired():
                complete = False
                break
            if self.cfg.prune and acc.strictly_dominates(bound_c, bound_l):
                # both children together cannot beat the relaxation bound
                self._count("pruned")
                if results is not None:
                    next(results)
                continue
            kids = next(results) if results is not None else self._children(idx, used, p, depth, pairs)
            for fl, fr in kids:
                complete = complete and fl.complete and fr.complete
                tag = len(refs)
                refs.append((p, fl, fr))
                self.k.merge_into(*acc.arrays, fl.cost, fl.loss, fr.cost, fr.loss, tag)
        if self.timed_out:
            complete = False

        def resolve(tag, i, j):
            if tag == -1:
                return leaf.prov[i]
            p, fl, fr = refs[tag]
            return (p, (fl, i), (fr, j))

        return self._finish(acc, resolve, complete)

    def run(self) -> _Front:
        idx = np.arange(self.n0, dtype=np.int64)
        depth, budget = self.cfg.max_depth, min(self.cfg.max_nodes, 2**self.cfg.max_depth - 1)
        if depth >= 2 and budget > 0 and self.cfg.threads > 1:
            self._count("subproblems")
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
                return self._solve_general(idx, frozenset(), depth, budget, pool=pool)
        return self.solve(idx, frozenset(), depth, budget)


def solve(cache: CacheMatrix, view: BinarizedView, config: SolverConfig | None = None,
          backend=None) -> SolveResult:
    """Complete Pareto front of recourse summary trees over the cached instances.

    ``backend`` optionally overrides the kernel module (see
    :func:`recourse_trees.kernels.load`).
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    if cache.n_instances < config.min_leaf_size:
        stats = SolveStats(wall_time=time.perf_counter() - t0)
        return SolveResult(ParetoArchive(), "infeasible", stats, cache.denominator, cache.n_instances)
    solver = _Solver(cache, view, config, backend)
    front = solver.run()
    entries = [
        (CostLossPair(int(front.cost[k]), int(front.loss[k])), RecourseSummaryTree(front.node(k)))
        for k in range(len(front) - 1, -1, -1)
    ]
    solver.stats.wall_time = time.perf_counter() - t0
    status = "complete" if front.complete and not solver.timed_out else "timed_out"
    return SolveResult(ParetoArchive(entries), status, solver.stats, cache.denominator, cache.n_instances)


# --------------------------------------------------------------------------
# exhaustive oracle


def _shapes(depth: int, n_preds: int) -> Iterator[tuple]:
    yield ("leaf",)
    if depth > 0:
        subs = list(_shapes(depth - 1, n_preds))
        for p in range(n_preds):
            for l in subs:
                for r in subs:
                    yield ("split", p, l, r)


def _route_shape(shape, rows, bits, out):
    if shape[0] == "leaf":
        out.append(rows)
        return
    _, p, l, r = shape
    fail = [i for i in rows if bits[i][p] == 0]
    passed = [i for i in rows if bits[i][p] != 0]
    _route_shape(l, fail, bits, out)
    _route_shape(r, passed, bits, out)


def _n_splits(shape) -> int:
    return 0 if shape[0] == "leaf" else 1 + _n_splits(shape[2]) + _n_splits(shape[3])


def _fill(shape, actions):
    if shape[0] == "leaf":
        return Leaf(int(next(actions)))
    _, p, l, r = shape
    left = _fill(l, actions)
    return Branch(p, left, _fill(r, actions))


def _sweep(points):
    """Nondominated subset of ``(cost, loss, payload)`` triples, sort-and-scan."""
    points = sorted(points, key=lambda t: (t[0], t[1]))
    out, best = [], None
    for c, l, w in points:
        if best is None or l < best:
            out.append((c, l, w))
            best = l
    return out


def brute_force_solve(cache: CacheMatrix, view: BinarizedView, config: SolverConfig) -> ParetoArchive:
    """Enumerate every tree up to depth 2 over at most 10 predicates.

    Independent of the DP: routes instances by plain iteration, sums cache
    cells per leaf and action directly, and filters with a sort-and-scan.
    """
    P = view.bits.shape[1]
    if P > 10 or config.max_depth > 2:
        raise ValueError("brute force is limited to <= 10 predicates and depth <= 2")
    bits = view.bits.tolist()
    cost = cache.cost_num.tolist()
    loss = cache.loss.tolist()
    A = cache.n_actions
    rows = list(range(cache.n_instances))
    leaf_cache: dict = {}

    def leaf_options(members):
        key = tuple(members)
        if key not in leaf_cache:
            vals = []
            for a in range(A):
                vals.append((sum(cost[i][a] for i in members), sum(loss[i][a] for i in members), a))
            opts = [v for v in vals if not any(
                w[0] <= v[0] and w[1] <= v[1] and (w[0], w[1]) != (v[0], v[1]) for w in vals)]
            dedup = {}
            for c, l, a in opts:
                dedup.setdefault((c, l), a)
            leaf_cache[key] = [(c, l, a) for (c, l), a in sorted(dedup.items())]
        return leaf_cache[key]

    candidates = []
    for shape in _shapes(config.max_depth, P):
        if _n_splits(shape) > config.max_nodes:
            continue
        groups: list = []
        _route_shape(shape, rows, bits, groups)
        if any(len(g) < config.min_leaf_size for g in groups):
            continue
        per_leaf = [leaf_options(g) for g in groups]
        combos = [(0, 0, ())]
        for opts in per_leaf:
            combos = [(c + oc, l + ol, acts + (a,)) for c, l, acts in combos for oc, ol, a in opts]
            combos = _sweep(combos)
        for c, l, acts in combos:
            candidates.append((c, l, (shape, acts)))
    best = _sweep(candidates)
    return ParetoArchive([
        (CostLossPair(c, l), RecourseSummaryTree(_fill(shape, iter(acts))))
        for c, l, (shape, acts) in best
    ])
