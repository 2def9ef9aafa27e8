import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grat.errors import DivisibilityError, OutOfBounds, RankMismatch, ShapeMismatch
from grat.grid import (
    GridShape,
    GroupShape,
    parse_dims,
    partition,
    relayout_group_major,
    restore_token_order,
    token_to_group,
)


@pytest.mark.parametrize(
    "grid, group, gcounts, P",
    [
        ((4, 4), (2, 2), (2, 2), 4),
        ((512, 512), (16, 16), (32, 32), 1024),
        ((32, 48, 80), (4, 8, 8), (8, 6, 10), 480),
    ],
)
def test_partition_counts(grid, group, gcounts, P):
    gg = partition(GridShape(grid), GroupShape(group))
    assert gg.gcounts == gcounts
    assert gg.n_groups == P


def test_partition_errors():
    with pytest.raises(DivisibilityError):
        partition(GridShape((5, 4)), GroupShape((2, 2)))
    with pytest.raises(RankMismatch):
        partition(GridShape((4, 4)), GroupShape((2, 2, 2)))


def test_shapes_reject_non_positive():
    with pytest.raises(ValueError):
        GridShape((0, 4))
    with pytest.raises(ValueError):
        GroupShape((2, -1))


def test_token_to_group():
    gg = partition(GridShape((4, 4)), GroupShape((2, 2)))
    assert token_to_group((3, 2), gg) == (1, 1)
    assert token_to_group((0, 0), gg) == (0, 0)
    vid = partition(GridShape((32, 48, 80)), GroupShape((4, 8, 8)))
    assert token_to_group((0, 0, 0), vid) == (0, 0, 0)
    assert token_to_group((7, 15, 63), vid) == (1, 1, 7)
    with pytest.raises(OutOfBounds):
        token_to_group((4, 0), gg)
    with pytest.raises(RankMismatch):
        token_to_group((1, 1, 1), gg)


def test_relayout_permutations():
    ident = partition(GridShape((2, 2)), GroupShape((1, 1)))
    assert ident.permutation.tolist() == [0, 1, 2, 3]
    gg = partition(GridShape((4, 4)), GroupShape((2, 2)))
    assert gg.permutation.tolist() == [0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15]


def test_relayout_shape_mismatch():
    gg = partition(GridShape((4, 4)), GroupShape((2, 2)))
    with pytest.raises(ShapeMismatch):
        relayout_group_major(np.zeros((15, 3)), gg)


def test_parse_dims():
    assert parse_dims("32x48x80") == (32, 48, 80)
    with pytest.raises(ValueError):
        parse_dims("3by4")


@st.composite
def grids(draw):
    rank = draw(st.sampled_from([1, 2, 3]))
    group = tuple(draw(st.integers(1, 3)) for _ in range(rank))
    counts = tuple(draw(st.integers(1, 4)) for _ in range(rank))
    return GridShape(tuple(g * c for g, c in zip(group, counts))), GroupShape(group)


@settings(max_examples=60, deadline=None)
@given(grids(), st.integers(0, 2**32 - 1))
def test_relayout_round_trip_and_contiguity(gs, seed):
    grid, group = gs
    gg = partition(grid, group)
    t = np.random.default_rng(seed).standard_normal((grid.n_tokens, 3)).astype(np.float32)
    moved, perm = relayout_group_major(t, gg)
    assert np.array_equal(restore_token_order(moved, perm), t)

    # each group's members form one contiguous row range after relayout
    coords = grid.coords()
    g = gg.group_size
    for p in range(gg.n_groups):
        rows = coords[perm[p * g:(p + 1) * g]]
        owners = {token_to_group(c, gg) for c in rows}
        assert owners == {gg.group_coord(p)}


@settings(max_examples=60, deadline=None)
@given(grids())
def test_exact_cover(gs):
    grid, group = gs
    gg = partition(grid, group)
    seen = np.concatenate([gg.members(p) for p in range(gg.n_groups)])
    assert sorted(seen.tolist()) == list(range(grid.n_tokens))
    # token_to_group agrees with membership enumeration
    tg = gg.token_groups()
    for p in range(gg.n_groups):
        assert (tg[gg.members(p)] == p).all()
