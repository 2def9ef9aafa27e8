"""Analytic efficiency metrics for attention schemes.

Conventions: tokens are unit-spaced integer lattice points, distances are
Euclidean between coordinates, boundary neighbourhoods are clamped and the
sparsity denominator is ``N**2`` (self pairs included).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from grat.errors import NonStochasticRows, ShapeMismatch, UnsupportedRank, UnsupportedScheme
from grat.grid import GridShape, partition
from grat.maskplan import (
    CircularRadius,
    CrissCrossToken,
    Full,
    GratB,
    GratX,
    Neighborhood,
    SchemeConfig,
    mask_for_scheme,
    per_axis,
    scheme_group,
    scheme_to_dict,
)


@dataclass(frozen=True)
class MaskStats:
    scheme: dict
    grid: tuple[int, ...]
    n_tokens: int
    pair_count: int
    flops_sparsity: float
    farthest: float
    farthest_ceil: int
    per_query_min: int
    per_query_max: int
    per_query_mean: float

    @property
    def sparsity_percent(self) -> float:
        return 100.0 * self.flops_sparsity

    def to_json(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MaskStats":
        return cls(**{**d, "grid": tuple(d["grid"])})


def ceil_distance(x: float) -> int:
    # sqrt of a perfect square can land a hair above the integer
    return int(math.ceil(x - 1e-9))


def _check_rank(scheme: SchemeConfig, grid: GridShape) -> None:
    if isinstance(scheme, (CircularRadius, CrissCrossToken)) and grid.rank != 2:
        raise UnsupportedRank(f"{scheme.name} is defined for 2D grids only, got {grid}")


def _span_counts(n: int, lo_reach: int, hi_reach: int) -> np.ndarray:
    """For each i in [0, n): how many j in [0, n) satisfy i - lo_reach <= j <= i + hi_reach."""
    i = np.arange(n, dtype=np.int64)
    return np.minimum(n - 1, i + hi_reach) - np.maximum(0, i - lo_reach) + 1


def _outer(vectors) -> np.ndarray:
    out = np.ones(1, dtype=np.int64)
    for v in vectors:
        out = np.multiply.outer(out, v).reshape(-1)
    return out


def _circle_halfwidth(r2: float, dy: int) -> int:
    return math.isqrt(int(math.floor(r2 - dy * dy)))


def per_query_counts(scheme: SchemeConfig, grid: GridShape) -> np.ndarray:
    """Permitted key count of every query token, row-major, from closed forms."""
    _check_rank(scheme, grid)
    n = grid.n_tokens
    if isinstance(scheme, Full):
        return np.full(n, n, dtype=np.int64)
    if isinstance(scheme, Neighborhood):
        half = [w // 2 for w in per_axis(scheme.window, grid.rank, "window")]
        return _outer(_span_counts(d, h, h) for d, h in zip(grid.dims, half))
    if isinstance(scheme, CrissCrossToken):
        return np.full(n, sum(grid.dims) - 1, dtype=np.int64)
    if isinstance(scheme, CircularRadius):
        H, W = grid.dims
        r2 = float(scheme.radius) ** 2
        counts = np.zeros((H, W), dtype=np.int64)
        rows = np.arange(H)
        reach = min(H - 1, int(math.floor(scheme.radius)))
        for dy in range(-reach, reach + 1):
            s = _circle_halfwidth(r2, dy)
            valid = ((rows + dy >= 0) & (rows + dy < H)).astype(np.int64)
            counts += np.multiply.outer(valid, _span_counts(W, s, s))
        return counts.reshape(-1)
    gg = partition(grid, scheme_group(scheme, grid))
    if isinstance(scheme, GratB):
        b = per_axis(scheme.b, grid.rank, "b")
        vecs = []
        for P, g, r in zip(gg.gcounts, gg.group.gdims, b):
            vecs.append(np.repeat(_span_counts(P, r, r) * g, g))
        return _outer(vecs)
    if isinstance(scheme, GratX):
        groups = gg.n_groups - int(np.prod([P - 1 for P in gg.gcounts]))
        return np.full(n, groups * gg.group_size, dtype=np.int64)
    raise UnsupportedScheme(f"no closed form for {scheme!r}")


def farthest_distance(scheme: SchemeConfig, grid: GridShape) -> tuple[float, int]:
    """Largest Euclidean distance over permitted pairs, raw and rounded up."""
    _check_rank(scheme, grid)
    extents = [d - 1 for d in grid.dims]
    if isinstance(scheme, Full):
        raw = math.sqrt(sum(e * e for e in extents))
    elif isinstance(scheme, Neighborhood):
        half = [w // 2 for w in per_axis(scheme.window, grid.rank, "window")]
        raw = math.sqrt(sum(min(h, e) ** 2 for h, e in zip(half, extents)))
    elif isinstance(scheme, CrissCrossToken):
        raw = float(max(extents))
    elif isinstance(scheme, CircularRadius):
        r2 = float(scheme.radius) ** 2
        best = 0
        for dy in range(min(extents[0], int(math.floor(scheme.radius))) + 1):
            dx = min(extents[1], _circle_halfwidth(r2, dy))
            best = max(best, dy * dy + dx * dx)
        raw = math.sqrt(best)
    elif isinstance(scheme, GratB):
        gg = partition(grid, scheme_group(scheme, grid))
        b = per_axis(scheme.b, grid.rank, "b")
        offs = [(min(r, P - 1) + 1) * g - 1 for r, P, g in zip(b, gg.gcounts, gg.group.gdims)]
        raw = math.sqrt(sum(o * o for o in offs))
    elif isinstance(scheme, GratX):
        gg = partition(grid, scheme_group(scheme, grid))
        raw = 0.0
        for a, g in enumerate(gg.group.gdims):
            sq = (g - 1) ** 2 + sum(e * e for i, e in enumerate(extents) if i != a)
            raw = max(raw, math.sqrt(sq))
    else:
        raise UnsupportedScheme(f"no farthest-distance rule for {scheme!r}")
    return raw, ceil_distance(raw)


def _stats(scheme: SchemeConfig, grid: GridShape, counts: np.ndarray, far: float) -> MaskStats:
    n = grid.n_tokens
    pairs = int(counts.sum())
    return MaskStats(
        scheme=scheme_to_dict(scheme),
        grid=grid.dims,
        n_tokens=n,
        pair_count=pairs,
        flops_sparsity=1.0 - pairs / (n * n),
        farthest=far,
        farthest_ceil=ceil_distance(far),
        per_query_min=int(counts.min()),
        per_query_max=int(counts.max()),
        per_query_mean=pairs / n,
    )


def mask_stats(scheme: SchemeConfig, grid: GridShape) -> MaskStats:
    counts = per_query_counts(scheme, grid)
    return _stats(scheme, grid, counts, farthest_distance(scheme, grid)[0])


def brute_force_stats(scheme: SchemeConfig, grid: GridShape, chunk: int = 512) -> MaskStats:
    """Same quantities by evaluating the token mask on every (query, key) pair."""
    _check_rank(scheme, grid)
    mask = mask_for_scheme(scheme, grid)
    n = grid.n_tokens
    coords = grid.coords().astype(np.float64)
    keys = np.arange(n)
    counts = np.empty(n, dtype=np.int64)
    far2 = 0.0
    for s in range(0, n, chunk):
        rows = np.arange(s, min(n, s + chunk))
        allowed = mask.block(rows, keys)
        counts[rows] = allowed.sum(axis=1)
        d2 = ((coords[rows][:, None, :] - coords[None, :, :]) ** 2).sum(axis=-1)
        far2 = max(far2, float(d2[allowed].max()))
    return _stats(scheme, grid, counts, math.sqrt(far2))


def complexity_estimate(scheme: SchemeConfig, grid: GridShape) -> int:
    """Boundary-free predicted pair count for the GRAT schemes."""
    if not isinstance(scheme, (GratB, GratX)):
        raise UnsupportedScheme(f"complexity estimate is defined for GRAT schemes, got {scheme.name}")
    n = grid.n_tokens
    gdims = scheme_group(scheme, grid).gdims
    partition(grid, scheme_group(scheme, grid))
    if isinstance(scheme, GratB):
        b = per_axis(scheme.b, grid.rank, "b")
        return n * int(np.prod([2 * r + 1 for r in b])) * int(np.prod(gdims))
    # union over axes of "same group coordinate on axis a", by inclusion-exclusion
    per_query = 0
    axes = range(grid.rank)
    for k in range(1, grid.rank + 1):
        for subset in itertools.combinations(axes, k):
            term = 1
            for a in axes:
                term *= gdims[a] if a in subset else grid.dims[a]
            per_query += (-1) ** (k + 1) * term
    return n * per_query


# -- attention mass by distance ---------------------------------------------


@dataclass(frozen=True)
class DistanceHistogram:
    edges: np.ndarray
    mass: np.ndarray
    d_max: float
    n_rows: int
    threshold: float
    mass_below: float

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def fraction_below(self) -> float:
        return self.mass_below / self.total if self.total else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "mass"])
        for lo, hi, m in zip(self.edges[:-1], self.edges[1:], self.mass):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", f"{m:.9g}"])
        return buf.getvalue()


def attention_mass_by_distance(weights, grid: GridShape, bins: int, threshold: float = 0.2,
                               chunk: int = 512) -> DistanceHistogram:
    """Histogram of attention weight over normalised query-key distance.

    Distances are divided by the grid diameter, so 1.0 is the largest
    possible separation.  Bin ``i`` covers ``[i/bins, (i+1)/bins)`` with the
    last bin closed.  ``mass_below`` is the exact weight at normalised
    distance strictly below ``threshold``.
    """
    w = np.asarray(weights)
    n = grid.n_tokens
    if w.ndim != 2 or w.shape != (n, n):
        raise ShapeMismatch(f"weights shape {w.shape} != ({n}, {n}) for grid {grid}")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    sums = w.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-3)
    if bad.size:
        raise NonStochasticRows(f"{bad.size} rows do not sum to 1 (row {bad[0]} sums to {sums[bad[0]]:.6g})")
    d_max = grid.diameter
    coords = grid.coords().astype(np.float64)
    mass = np.zeros(bins)
    below = 0.0
    for s in range(0, n, chunk):
        rows = slice(s, min(n, s + chunk))
        dist = np.sqrt(((coords[rows][:, None, :] - coords[None, :, :]) ** 2).sum(axis=-1))
        x = dist / d_max if d_max > 0 else np.zeros_like(dist)
        idx = np.minimum((x * bins).astype(np.int64), bins - 1)
        wr = w[rows].astype(np.float64)
        mass += np.bincount(idx.ravel(), weights=wr.ravel(), minlength=bins)
        below += float(wr[x < threshold].sum())
    edges = np.linspace(0.0, 1.0, bins + 1)
    return DistanceHistogram(edges, mass, d_max, n, threshold, below)
