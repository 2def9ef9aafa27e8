"""Attendable-set construction for GRAT-B, GRAT-X and the token-level baselines.

GRAT variants produce an :class:`AttentionPlan` at group granularity.  The
baselines (neighbourhood, circular, criss-cross) are defined per token as a
:class:`TokenMask`; :func:`plan_for_scheme` turns them into plans over
single-token groups so every scheme can drive the block-sparse executor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from grat.errors import RankMismatch, UnsupportedRank, UnsupportedScheme
from grat.grid import GridShape, GroupGrid, GroupShape, partition


def per_axis(values, rank: int, what: str) -> tuple[int, ...]:
    """Broadcast a scalar (or 1-sequence) to ``rank`` axes."""
    if isinstance(values, (int, np.integer)):
        values = (int(values),)
    values = tuple(int(v) for v in values)
    if len(values) == 1:
        values = values * rank
    if len(values) != rank:
        raise RankMismatch(f"{what} has {len(values)} axes, expected {rank}")
    return values


def _as_tuple(v) -> tuple[int, ...]:
    return (int(v),) if isinstance(v, (int, np.integer)) else tuple(int(x) for x in v)


# -- scheme configs ---------------------------------------------------------


@dataclass(frozen=True)
class Full:
    group: Optional[tuple[int, ...]] = None
    name = "full"

    def __post_init__(self):
        if self.group is not None:
            object.__setattr__(self, "group", _as_tuple(self.group))


@dataclass(frozen=True)
class Neighborhood:
    window: tuple[int, ...]
    name = "neighborhood"

    def __post_init__(self):
        w = _as_tuple(self.window)
        if any(v < 1 for v in w):
            raise ValueError(f"window must be >= 1, got {w}")
        object.__setattr__(self, "window", w)


@dataclass(frozen=True)
class CircularRadius:
    radius: float
    name = "circular"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class CrissCrossToken:
    name = "crisscross"


@dataclass(frozen=True)
class GratB:
    b: tuple[int, ...]
    group: tuple[int, ...]
    name = "grat-b"

    def __post_init__(self):
        b = _as_tuple(self.b)
        if any(v < 0 for v in b):
            raise ValueError(f"b must be >= 0, got {b}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "group", _as_tuple(self.group))


@dataclass(frozen=True)
class GratX:
    group: tuple[int, ...]
    name = "grat-x"

    def __post_init__(self):
        object.__setattr__(self, "group", _as_tuple(self.group))


SchemeConfig = Union[Full, Neighborhood, CircularRadius, CrissCrossToken, GratB, GratX]
GRAT_SCHEMES = (GratB, GratX)


def scheme_to_dict(scheme: SchemeConfig) -> dict:
    out: dict = {"name": scheme.name}
    if isinstance(scheme, Neighborhood):
        out["window"] = list(scheme.window)
    elif isinstance(scheme, CircularRadius):
        out["radius"] = scheme.radius
    elif isinstance(scheme, GratB):
        out["b"] = list(scheme.b)
    if getattr(scheme, "group", None) is not None:
        out["group"] = list(scheme.group)
    return out


def scheme_from_dict(d: dict) -> SchemeConfig:
    name = d["name"]
    group = tuple(d["group"]) if d.get("group") is not None else None
    if name == "full":
        return Full(group)
    if name == "neighborhood":
        return Neighborhood(tuple(d["window"]))
    if name == "circular":
        return CircularRadius(d["radius"])
    if name == "crisscross":
        return CrissCrossToken()
    if name == "grat-b":
        return GratB(tuple(d["b"]), group)
    if name == "grat-x":
        return GratX(group)
    raise UnsupportedScheme(f"unknown scheme {name!r}")


def describe(scheme: SchemeConfig) -> str:
    """Short human-readable configuration string."""
    if isinstance(scheme, Neighborhood):
        return "window=" + "x".join(map(str, scheme.window))
    if isinstance(scheme, CircularRadius):
        return f"radius={scheme.radius:g}"
    if isinstance(scheme, GratB):
        return "group=" + "x".join(map(str, scheme.group)) + " b=" + "x".join(map(str, scheme.b))
    if isinstance(scheme, GratX):
        return "group=" + "x".join(map(str, scheme.group))
    return "N/A"


# -- plans and masks --------------------------------------------------------


@dataclass(frozen=True)
class AttentionPlan:
    """For each query group (row-major), the ascending key-group indices it may read."""

    gg: GroupGrid
    entries: tuple[tuple[int, ...], ...]
    scheme: Optional[SchemeConfig] = field(default=None, compare=False)

    def __post_init__(self):
        P = self.gg.n_groups
        if len(self.entries) != P:
            raise ValueError(f"plan has {len(self.entries)} entries for {P} groups")
        for p, row in enumerate(self.entries):
            if p not in row:
                raise ValueError(f"query group {p} does not attend itself")
            if row[0] < 0 or row[-1] >= P or any(a >= b for a, b in zip(row, row[1:])):
                raise ValueError(f"entry {p} is not strictly ascending within [0, {P})")

    def adjacency(self) -> np.ndarray:
        """``P x P`` boolean matrix of permitted (query group, key group) pairs."""
        P = self.gg.n_groups
        adj = np.zeros((P, P), dtype=bool)
        for p, row in enumerate(self.entries):
            adj[p, list(row)] = True
        return adj

    def token_pairs(self) -> int:
        return sum(len(r) for r in self.entries) * self.gg.group_size ** 2

    def key_spans(self, p: int) -> list[tuple[int, int]]:
        """Runs of consecutive key groups of entry ``p`` as group-major token ranges."""
        g = self.gg.group_size
        spans = []
        for _, run in itertools.groupby(enumerate(self.entries[p]), lambda t: t[1] - t[0]):
            run = [k for _, k in run]
            spans.append((run[0] * g, (run[-1] + 1) * g))
        return spans


# Predicate over 1-D token index arrays: (q_idx (n,), k_idx (m,)) -> (n, m) bool.
Predicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TokenMask:
    grid: GridShape
    predicate: Predicate = field(compare=False)

    def block(self, q_idx, k_idx) -> np.ndarray:
        q_idx = np.atleast_1d(np.asarray(q_idx, dtype=np.int64))
        k_idx = np.atleast_1d(np.asarray(k_idx, dtype=np.int64))
        out = self.predicate(q_idx, k_idx)
        return np.broadcast_to(np.asarray(out, dtype=bool), (q_idx.size, k_idx.size))

    def allowed(self, q: Sequence[int], k: Sequence[int]) -> bool:
        qi = np.ravel_multi_index(tuple(q), self.grid.dims)
        ki = np.ravel_multi_index(tuple(k), self.grid.dims)
        return bool(self.block([qi], [ki])[0, 0])

    def row(self, q: int) -> np.ndarray:
        return self.block([q], np.arange(self.grid.n_tokens))[0]

    def dense(self) -> np.ndarray:
        n = self.grid.n_tokens
        return self.block(np.arange(n), np.arange(n))


def _coord_mask(grid: GridShape, axis_test: Callable[[np.ndarray, int], np.ndarray],
                reduce: Callable = np.logical_and) -> TokenMask:
    """Mask from a per-axis test on coordinate differences, folded with ``reduce``."""
    coords = grid.coords()

    def predicate(qi, ki):
        qc, kc = coords[qi], coords[ki]
        out = None
        for a in range(grid.rank):
            hit = axis_test(kc[None, :, a] - qc[:, None, a], a)
            out = hit if out is None else reduce(out, hit)
        return out

    return TokenMask(grid, predicate)


def plan_grat_b(gg: GroupGrid, b) -> AttentionPlan:
    b = per_axis(b, gg.rank, "b")
    entries = []
    for gc in itertools.product(*(range(c) for c in gg.gcounts)):
        ranges = [np.arange(max(0, p - r), min(c, p + r + 1)) for p, r, c in zip(gc, b, gg.gcounts)]
        mesh = np.meshgrid(*ranges, indexing="ij")
        idx = np.ravel_multi_index(tuple(m.ravel() for m in mesh), gg.gcounts)
        entries.append(tuple(int(i) for i in idx))
    return AttentionPlan(gg, tuple(entries), GratB(b, gg.group.gdims))


def plan_grat_x(gg: GroupGrid) -> AttentionPlan:
    # 2D reading is (m == p or n == q); the per-axis-match form covers 3D too
    gcs = gg.group_coords()
    entries = tuple(
        tuple(int(i) for i in np.flatnonzero((gcs == gc).any(axis=1))) for gc in gcs
    )
    return AttentionPlan(gg, entries, GratX(gg.group.gdims))


def plan_full(gg: GroupGrid) -> AttentionPlan:
    everything = tuple(range(gg.n_groups))
    return AttentionPlan(gg, (everything,) * gg.n_groups, Full(gg.group.gdims))


def mask_full(grid: GridShape) -> TokenMask:
    return TokenMask(grid, lambda qi, ki: np.ones((qi.size, ki.size), dtype=bool))


def mask_neighborhood(grid: GridShape, w) -> TokenMask:
    w = per_axis(w, grid.rank, "window")
    if any(v < 1 for v in w):
        raise ValueError(f"window must be >= 1, got {w}")
    half = [v // 2 for v in w]
    return _coord_mask(grid, lambda delta, a: np.abs(delta) <= half[a])


def mask_circular(grid: GridShape, r: float) -> TokenMask:
    if grid.rank != 2:
        raise UnsupportedRank(f"circular windows are 2D only, grid is {grid}")
    r2 = float(r) ** 2
    coords = grid.coords()

    def predicate(qi, ki):
        dy = coords[ki][None, :, 0] - coords[qi][:, None, 0]
        dx = coords[ki][None, :, 1] - coords[qi][:, None, 1]
        return dy * dy + dx * dx <= r2

    return TokenMask(grid, predicate)


def mask_crisscross_token(grid: GridShape) -> TokenMask:
    if grid.rank != 2:
        raise UnsupportedRank(f"token criss-cross is 2D only, grid is {grid}")
    return _coord_mask(grid, lambda delta, a: delta == 0, reduce=np.logical_or)


def plan_to_token_mask(plan: AttentionPlan) -> TokenMask:
    adj = plan.adjacency()
    tg = plan.gg.token_groups()
    return TokenMask(plan.gg.grid, lambda qi, ki: adj[tg[qi][:, None], tg[ki][None, :]])


def plan_from_mask(mask: TokenMask, gg: GroupGrid, scheme: Optional[SchemeConfig] = None) -> AttentionPlan:
    """Group-level plan for a mask that is constant over every (query, key) group block."""
    P, g = gg.n_groups, gg.group_size
    perm = gg.permutation
    entries = []
    for p in range(P):
        rows = mask.block(perm[p * g:(p + 1) * g], perm).reshape(g, P, g)
        any_ = rows.any(axis=(0, 2))
        if g > 1 and not np.array_equal(any_, rows.all(axis=(0, 2))):
            raise ValueError(f"mask is not constant over group blocks of {gg.group}")
        entries.append(tuple(int(i) for i in np.flatnonzero(any_)))
    return AttentionPlan(gg, tuple(entries), scheme)


def scheme_group(scheme: SchemeConfig, grid: GridShape) -> GroupShape:
    """Group shape a scheme executes with; token-level baselines use single tokens."""
    if isinstance(scheme, GRAT_SCHEMES):
        return GroupShape(per_axis(scheme.group, grid.rank, "group"))
    if isinstance(scheme, Full):
        return GroupShape(scheme.group if scheme.group is not None else grid.dims)
    return GroupShape((1,) * grid.rank)


def mask_for_scheme(scheme: SchemeConfig, grid: GridShape) -> TokenMask:
    if isinstance(scheme, Full):
        return mask_full(grid)
    if isinstance(scheme, Neighborhood):
        return mask_neighborhood(grid, scheme.window)
    if isinstance(scheme, CircularRadius):
        return mask_circular(grid, scheme.radius)
    if isinstance(scheme, CrissCrossToken):
        return mask_crisscross_token(grid)
    return plan_to_token_mask(plan_for_scheme(scheme, grid))


def plan_for_scheme(scheme: SchemeConfig, grid: GridShape) -> AttentionPlan:
    gg = partition(grid, scheme_group(scheme, grid))
    if isinstance(scheme, GratB):
        return plan_grat_b(gg, scheme.b)
    if isinstance(scheme, GratX):
        return plan_grat_x(gg)
    if isinstance(scheme, Full):
        return plan_full(gg)
    return plan_from_mask(mask_for_scheme(scheme, grid), gg, scheme)


# -- JSON -------------------------------------------------------------------


def plan_to_json(plan: AttentionPlan) -> dict:
    scheme = scheme_to_dict(plan.scheme) if plan.scheme is not None else None
    return {
        "scheme": scheme,
        "grid": list(plan.gg.grid.dims),
        "group": list(plan.gg.group.gdims),
        "entries": [list(r) for r in plan.entries],
    }


def plan_from_json(d: dict) -> AttentionPlan:
    gg = partition(GridShape(tuple(d["grid"])), GroupShape(tuple(d["group"])))
    scheme = scheme_from_dict(d["scheme"]) if d.get("scheme") else None
    return AttentionPlan(gg, tuple(tuple(int(i) for i in r) for r in d["entries"]), scheme)
