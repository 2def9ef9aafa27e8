"""Token-lattice geometry: grid shapes, group partitioning and group-major relayout.

Tokens are linearised row-major over the axes in the order given, so for a
video grid ``(T, H, W)`` time is the outermost axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from grat.errors import DivisibilityError, OutOfBounds, RankMismatch, ShapeMismatch


def _positive_tuple(values: Sequence[int], what: str) -> tuple[int, ...]:
    out = tuple(int(v) for v in values)
    if not out:
        raise ValueError(f"{what} needs at least one axis")
    if any(v < 1 for v in out):
        raise ValueError(f"{what} extents must be >= 1, got {out}")
    return out


@dataclass(frozen=True)
class GridShape:
    """Token counts per axis: ``(H, W)`` for images, ``(T, H, W)`` for video."""

    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", _positive_tuple(self.dims, "grid"))

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def n_tokens(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def diameter(self) -> float:
        """Euclidean distance between opposite corner tokens."""
        return float(np.sqrt(sum((d - 1) ** 2 for d in self.dims)))

    def coords(self) -> np.ndarray:
        """All token coordinates as an ``(N, rank)`` int64 array, row-major."""
        return np.indices(self.dims, dtype=np.int64).reshape(self.rank, -1).T

    def __str__(self) -> str:
        return "x".join(map(str, self.dims))


@dataclass(frozen=True)
class GroupShape:
    gdims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "gdims", _positive_tuple(self.gdims, "group"))

    @property
    def size(self) -> int:
        return int(np.prod(self.gdims, dtype=np.int64))

    def __str__(self) -> str:
        return "x".join(map(str, self.gdims))


@dataclass(frozen=True)
class GroupGrid:
    """A grid together with an exact partition into equal groups."""

    grid: GridShape
    group: GroupShape
    gcounts: tuple[int, ...]

    @property
    def rank(self) -> int:
        return self.grid.rank

    @property
    def n_groups(self) -> int:
        return int(np.prod(self.gcounts, dtype=np.int64))

    @property
    def group_size(self) -> int:
        return self.group.size

    def group_index(self, gcoord: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(gcoord), self.gcounts))

    def group_coord(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, self.gcounts))

    def group_coords(self) -> np.ndarray:
        """Per-axis coordinates of every group, ``(P, rank)``, row-major."""
        return np.indices(self.gcounts, dtype=np.int64).reshape(self.rank, -1).T

    def token_groups(self) -> np.ndarray:
        """Linear group index of every token in row-major token order."""
        gdims = np.asarray(self.group.gdims)
        per_axis = self.grid.coords() // gdims
        return np.ravel_multi_index(tuple(per_axis.T), self.gcounts).astype(np.int64)

    @cached_property
    def permutation(self) -> np.ndarray:
        """``perm`` with ``grouped[i] = tokens[perm[i]]``."""
        split = []
        for count, g in zip(self.gcounts, self.group.gdims):
            split += [count, g]
        r = self.rank
        order = [2 * a for a in range(r)] + [2 * a + 1 for a in range(r)]
        ids = np.arange(self.grid.n_tokens, dtype=np.int64).reshape(split)
        return np.ascontiguousarray(ids.transpose(order).reshape(-1))

    def members(self, index: int) -> np.ndarray:
        """Row-major token indices of one group, in local row-major order."""
        g = self.group_size
        return self.permutation[index * g:(index + 1) * g]


def partition(grid: GridShape, group: GroupShape) -> GroupGrid:
    if grid.rank != len(group.gdims):
        raise RankMismatch(f"grid {grid} has rank {grid.rank}, group {group} has rank {len(group.gdims)}")
    for d, g in zip(grid.dims, group.gdims):
        if d % g:
            raise DivisibilityError(f"group extent {g} does not divide grid extent {d} ({group} vs {grid})")
    gcounts = tuple(d // g for d, g in zip(grid.dims, group.gdims))
    return GroupGrid(grid, group, gcounts)


def token_to_group(coord: Sequence[int], gg: GroupGrid) -> tuple[int, ...]:
    coord = tuple(int(c) for c in coord)
    if len(coord) != gg.rank:
        raise RankMismatch(f"coordinate {coord} has rank {len(coord)}, grid rank is {gg.rank}")
    if any(c < 0 or c >= d for c, d in zip(coord, gg.grid.dims)):
        raise OutOfBounds(f"coordinate {coord} outside grid {gg.grid}")
    return tuple(c // g for c, g in zip(coord, gg.group.gdims))


def relayout_group_major(t: np.ndarray, gg: GroupGrid) -> tuple[np.ndarray, np.ndarray]:
    """Reorder the token axis (axis 0) so every group is a contiguous row range."""
    t = np.asarray(t)
    if t.ndim < 1 or t.shape[0] != gg.grid.n_tokens:
        raise ShapeMismatch(f"leading extent {t.shape[:1]} != token count {gg.grid.n_tokens}")
    perm = gg.permutation
    return t[perm], perm


def restore_token_order(t: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Inverse of :func:`relayout_group_major`."""
    t = np.asarray(t)
    if t.shape[0] != perm.shape[0]:
        raise ShapeMismatch(f"leading extent {t.shape[0]} != permutation length {perm.shape[0]}")
    out = np.empty_like(t)
    out[perm] = t
    return out


def parse_dims(text: str) -> tuple[int, ...]:
    """Parse ``"32x48x80"`` into ``(32, 48, 80)``."""
    try:
        return tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"expected AxB or AxBxC, got {text!r}") from None
