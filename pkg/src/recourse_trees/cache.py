"""Precomputed cost and loss of every action on every affected instance.

Costs are Maximum Percentile Shift values. Because each percentile is a count
over the ``N`` population rows, every cost is stored exactly as an integer
numerator over ``N``; sums over any subset are then exact and independent of
summation order. Divide by :attr:`CacheMatrix.denominator` for the real value.
"""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import Action, ActionSet, apply_action_batch, apply_edit
from .pareto import CostLossPair, ParetoArchive, nondom
from .schema import Binning, EmpiricalCdf

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_CAP = 4 * 2**30
_MAGIC = b"RTCACHE1"


class CacheTooLarge(MemoryError):
    pass


class CacheMismatch(ValueError):
    pass


@dataclass
class CacheMatrix:
    cost_num: np.ndarray  # (n_affected, n_actions) int32, cost * denominator
    loss: np.ndarray  # (n_affected, n_actions) uint8
    denominator: int
    affected: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost_num.shape

    @property
    def n_instances(self) -> int:
        return self.cost_num.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost_num.shape[1]

    @property
    def cost(self) -> np.ndarray:
        return self.cost_num / self.denominator

    def row_min_cost(self) -> np.ndarray:
        return self.cost_num.min(axis=1).astype(np.int64)

    def row_min_loss(self) -> np.ndarray:
        return self.loss.min(axis=1).astype(np.int64)


def estimate_cache_bytes(n_instances: int, n_actions: int) -> int:
    """In-memory footprint: a 4-byte cost cell plus a 1-byte loss cell."""
    return int(n_instances) * int(n_actions) * 5


def mps_numerator(action: Action, X: np.ndarray, cdfs: EmpiricalCdf, binning: Binning) -> np.ndarray:
    """``N * c_MPS(a, x)`` for every row of ``X``, as exact integers."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.zeros(X.shape[0], dtype=np.int64)
    for e in action.edits:
        new = apply_edit(e, X, binning)
        np.maximum(out, cdfs.shift_numerator(e.feature, X[:, e.feature], new), out=out)
    return out


def mps_cost(action: Action, x, cdfs: EmpiricalCdf, binning: Binning) -> float:
    """Largest absolute percentile shift over the features the action edits."""
    return float(mps_numerator(action, x, cdfs, binning)[0]) / cdfs.n


def recourse_loss(action: Action, x, predictor, binning: Binning) -> int:
    """1 when ``a(x)`` is still classified 0."""
    moved = apply_action_batch(action, np.atleast_2d(np.asarray(x, dtype=float)), binning)
    return int(np.asarray(predictor.predict_batch(moved))[0] == 0)


def build_cache(
    X0: np.ndarray,
    actions: ActionSet,
    predictor,
    cdfs: EmpiricalCdf,
    binning: Binning,
    affected=None,
    threads: int = 1,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    rows_per_batch: int = 200_000,
) -> CacheMatrix:
    """Evaluate every (affected instance, action) cell.

    ``X0`` holds the affected instances (encoded). Transformed instances are
    materialized one chunk of actions at a time and discarded after
    prediction. Chunks are independent, so the result does not depend on
    ``threads``.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    n, A = X0.shape[0], len(actions)
    if n == 0 or A == 0:
        raise ValueError("cache needs at least one instance and one action")
    need = estimate_cache_bytes(n, A)
    logger.info("cache of %d x %d cells, about %.1f MiB", n, A, need / 2**20)
    if need > memory_cap:
        raise CacheTooLarge(
            f"cache needs about {need / 2**20:,.0f} MiB for {n} x {A} cells "
            f"(cap {memory_cap / 2**20:,.0f} MiB)"
        )

    # per single edit: new feature values and exact cost numerators
    singles = actions.singles
    new_vals = np.empty((n, len(singles)), dtype=np.float64)
    single_num = np.zeros((n, len(singles) + 1), dtype=np.int64)  # last column: no edit
    for s, e in enumerate(singles):
        new_vals[:, s] = apply_edit(e, X0, binning)
        single_num[:, s] = cdfs.shift_numerator(e.feature, X0[:, e.feature], new_vals[:, s])

    table = actions.edit_table
    cost_num = single_num[:, table].max(axis=2).astype(np.int32)
    loss = np.empty((n, A), dtype=np.uint8)

    per_chunk = max(1, rows_per_batch // n)
    chunks = [(s, min(s + per_chunk, A)) for s in range(0, A, per_chunk)]
    edit_features = np.array([e.feature for e in singles] + [0], dtype=np.int64)

    def label_chunk(bounds):
        lo, hi = bounds
        block = np.repeat(X0[None, :, :], hi - lo, axis=0)
        for c in range(table.shape[1]):
            ids = table[lo:hi, c]
            rows = np.flatnonzero(ids >= 0)
            if rows.size == 0:
                continue
            feats = edit_features[ids[rows]]
            block[rows, :, feats] = new_vals[:, ids[rows]].T
        labels = np.asarray(predictor.predict_batch(block.reshape(-1, X0.shape[1])))
        loss[:, lo:hi] = (labels.reshape(hi - lo, n) == 0).T

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(label_chunk, chunks))
    else:
        for ch in chunks:
            label_chunk(ch)

    if affected is None:
        affected = np.arange(n)
    return CacheMatrix(cost_num, loss, cdfs.n, np.asarray(affected, dtype=np.int64))


def leaf_value(instances, a: int, cache: CacheMatrix) -> CostLossPair:
    """Summed (cost numerator, loss) of action ``a`` over ``instances``."""
    idx = np.asarray(instances, dtype=np.int64)
    return CostLossPair(
        int(cache.cost_num[idx, a].sum(dtype=np.int64)), int(cache.loss[idx, a].sum(dtype=np.int64))
    )


def leaf_sums(instances, cache: CacheMatrix, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Summed cost numerators and losses of every action over ``instances``."""
    idx = np.asarray(instances, dtype=np.int64)
    A = cache.n_actions
    costs = np.empty(A, dtype=np.int64)
    losses = np.empty(A, dtype=np.int64)

    def work(bounds):
        lo, hi = bounds
        costs[lo:hi] = cache.cost_num[idx, lo:hi].sum(axis=0, dtype=np.int64)
        losses[lo:hi] = cache.loss[idx, lo:hi].sum(axis=0, dtype=np.int64)

    if threads > 1:
        step = -(-A // threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, [(s, min(s + step, A)) for s in range(0, A, step)]))
    else:
        work((0, A))
    return costs, losses


def best_leaf_solutions(instances, cache: CacheMatrix, threads: int = 1) -> ParetoArchive:
    """Nondominated (value, action index) pairs for one leaf; ties go to the lower index."""
    costs, losses = leaf_sums(instances, cache, threads)
    return nondom(
        ((CostLossPair(int(c), int(l)), a) for a, (c, l) in enumerate(zip(costs, losses))),
        tie_key=lambda a: a,
    )


def save_cache(path: str | Path, cache: CacheMatrix, schema_hash: str, actions_hash: str) -> None:
    n, A = cache.shape
    header = json.dumps(
        {
            "n_instances": n,
            "n_actions": A,
            "denominator": cache.denominator,
            "schema_hash": schema_hash,
            "actions_hash": actions_hash,
            "affected": cache.affected.tolist(),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(cache.cost_num, dtype="<i4").tobytes())
        fh.write(np.packbits(cache.loss.astype(bool), axis=None).tobytes())


def load_cache(path: str | Path, schema_hash: str, actions_hash: str) -> CacheMatrix:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise CacheMismatch(f"{path}: not a cache file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        if header["schema_hash"] != schema_hash or header["actions_hash"] != actions_hash:
            raise CacheMismatch(f"{path}: cache was built for a different schema or action set")
        n, A = header["n_instances"], header["n_actions"]
        cost = np.frombuffer(fh.read(4 * n * A), dtype="<i4").reshape(n, A).astype(np.int32)
        bits = np.frombuffer(fh.read(), dtype=np.uint8)
        loss = np.unpackbits(bits, count=n * A).reshape(n, A)
    return CacheMatrix(cost, loss, header["denominator"], np.array(header["affected"], dtype=np.int64))
