"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and bit-identical results; selected when the extension is
missing or ``RECOURSE_TREES_PURE=1`` is set.
"""

from __future__ import annotations

import numpy as np

INF = np.iinfo(np.int64).max


def _front_of(cost: np.ndarray, loss: np.ndarray):
    """Ascending-loss front of one candidate list; earliest index wins ties."""
    order = np.lexsort((np.arange(cost.size), cost, loss))
    loss_s, cost_s = loss[order], cost[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = loss_s[1:] != loss_s[:-1]
    idx, lv, cv = order[first], loss_s[first], cost_s[first]
    if cv.size == 0:
        return idx, lv, cv
    prev_min = np.minimum.accumulate(np.concatenate(([INF], cv[:-1])))
    keep = cv < prev_min
    return idx[keep], lv[keep], cv[keep]


def row_fronts(cost, loss, max_loss):
    cost = np.asarray(cost, dtype=np.int64)
    loss = np.asarray(loss, dtype=np.int64)
    offsets = np.zeros(cost.shape[0] + 1, dtype=np.int64)
    fc, fl, fa = [], [], []
    for r in range(cost.shape[0]):
        ok = loss[r] <= max_loss
        cols = np.flatnonzero(ok)
        idx, lv, cv = _front_of(cost[r, cols], loss[r, cols])
        fa.append(cols[idx])
        fl.append(lv)
        fc.append(cv)
        offsets[r + 1] = offsets[r] + idx.size
    cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.empty(0, np.int64)
    return offsets, cat(fc), cat(fl), cat(fa)


def _accumulate(acc_cost, acc_tag, acc_i, acc_j, c, l, ii, jj, tag):
    M = acc_cost.shape[0]
    ok = l < M
    c, l, ii, jj = c[ok], l[ok], ii[ok], jj[ok]
    if c.size == 0:
        return
    order = np.lexsort((np.arange(c.size), c, l))
    ls = l[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = ls[1:] != ls[:-1]
    sel = order[first]
    lv, cv = l[sel], c[sel]
    better = cv < acc_cost[lv]
    sel, lv, cv = sel[better], lv[better], cv[better]
    acc_cost[lv] = cv
    acc_tag[lv] = tag
    acc_i[lv] = ii[sel]
    acc_j[lv] = jj[sel]


def _merge(acc, c1, l1, s1, c2, l2, s2, tag):
    if c1.size == 0 or c2.size == 0:
        return
    c = (c1[:, None] + c2[None, :]).ravel()
    l = (l1[:, None] + l2[None, :]).ravel()
    ii = np.repeat(np.arange(c1.size, dtype=np.int64) + s1, c2.size)
    jj = np.tile(np.arange(c2.size, dtype=np.int64) + s2, c1.size)
    _accumulate(*acc, c, l, ii, jj, tag)


def merge_into(acc_cost, acc_tag, acc_i, acc_j, c1, l1, c2, l2, tag):
    _merge((acc_cost, acc_tag, acc_i, acc_j), np.asarray(c1), np.asarray(l1), 0,
           np.asarray(c2), np.asarray(l2), 0, tag)


def merge_pairs_into(acc_cost, acc_tag, acc_i, acc_j, offsets, fc, fl, left_rows, right_rows, tags):
    acc = (acc_cost, acc_tag, acc_i, acc_j)
    for a, b, tag in zip(left_rows, right_rows, tags):
        s1, e1 = offsets[a], offsets[a + 1]
        s2, e2 = offsets[b], offsets[b + 1]
        _merge(acc, fc[s1:e1], fl[s1:e1], s1, fc[s2:e2], fl[s2:e2], s2, int(tag))


def push_into(acc_cost, acc_tag, acc_i, acc_j, c, l, tag):
    c = np.asarray(c, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    ii = np.arange(c.size, dtype=np.int64)
    _accumulate(acc_cost, acc_tag, acc_i, acc_j, c, l, ii, np.full(c.size, -1, np.int64), tag)


def finalize(acc_cost):
    acc_cost = np.asarray(acc_cost)
    if acc_cost.size == 0:
        return np.empty(0, dtype=np.int64)
    prev_min = np.minimum.accumulate(np.concatenate(([INF], acc_cost[:-1])))
    return np.flatnonzero(acc_cost < prev_min).astype(np.int64)
