"""Bi-objective algebra over (cost, loss) pairs.

Both objectives are minimized. ``v`` dominates ``w`` when it is no worse in
either component and differs from it. The DP solver runs the same algebra on
integer arrays through :mod:`recourse_trees.kernels`; this module is the
readable, object-level version used at the API surface and in tests.
"""

from __future__ import annotations

from typing import Any, Callable, Iterable, Iterator, NamedTuple


class CostLossPair(NamedTuple):
    cost: float
    loss: int

    def __add__(self, other):  # tuple concatenation would be a trap here
        return combine(self, other)


ZERO = CostLossPair(0, 0)


def dominates(v: CostLossPair, w: CostLossPair) -> bool:
    return v[0] <= w[0] and v[1] <= w[1] and (v[0], v[1]) != (w[0], w[1])


def combine(v: CostLossPair, w: CostLossPair) -> CostLossPair:
    return CostLossPair(v[0] + w[0], v[1] + w[1])


class ParetoArchive:
    """Mutually nondominated ``(value, payload)`` entries sorted by cost.

    Costs strictly increase and losses strictly decrease along the archive.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: list[tuple[CostLossPair, Any]] | None = None):
        self.entries = entries or []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[CostLossPair, Any]]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __bool__(self) -> bool:
        return bool(self.entries)

    def values(self) -> list[CostLossPair]:
        return [v for v, _ in self.entries]

    def payloads(self) -> list:
        return [p for _, p in self.entries]

    def __repr__(self) -> str:
        return f"ParetoArchive({self.values()!r})"


def nondom(
    entries: Iterable[tuple[CostLossPair, Any]],
    tie_key: Callable[[Any], Any] | None = None,
) -> ParetoArchive:
    """Nondominated subset; equal values collapse onto the smallest ``tie_key``.

    Without ``tie_key`` the first entry (in input order) of a value-equal
    group is kept.
    """
    items = [(CostLossPair(*v), p) for v, p in entries]
    if tie_key is None:
        order = sorted(range(len(items)), key=lambda i: (items[i][0][0], items[i][0][1], i))
    else:
        order = sorted(
            range(len(items)),
            key=lambda i: (items[i][0][0], items[i][0][1], tie_key(items[i][1]), i),
        )
    kept = []
    best_loss = None
    for i in order:
        v, p = items[i]
        if best_loss is None or v[1] < best_loss:
            kept.append((v, p))
            best_loss = v[1]
    return ParetoArchive(kept)


def merge(
    left: ParetoArchive,
    right: ParetoArchive,
    tie_key: Callable[[Any], Any] | None = None,
) -> ParetoArchive:
    """Nondominated cross sums; payloads pair up as ``(left, right)``."""
    return nondom(
        ((combine(v1, v2), (p1, p2)) for v1, p1 in left for v2, p2 in right),
        tie_key=tie_key,
    )
