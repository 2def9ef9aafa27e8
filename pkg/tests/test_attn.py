import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from grat.attn import (
    AttnConfig,
    attention_weights,
    block_sparse_attention,
    dense_masked_attention,
    grouped_block_attention,
    mask_index_lists,
    scattered_attention,
    token_index_lists,
)
from grat.errors import FullyMaskedRow, NonFiniteInput, PlanGridMismatch, ShapeMismatch
from grat.grid import GridShape, GroupShape, partition, relayout_group_major
from grat.maskplan import (
    CircularRadius,
    CrissCrossToken,
    Full,
    GratB,
    GratX,
    Neighborhood,
    TokenMask,
    mask_full,
    plan_for_scheme,
    plan_full,
    plan_grat_b,
    plan_to_token_mask,
)


def qkv(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((n, d)).astype(np.float32) for _ in range(3)]


def test_single_token_returns_value():
    Q, K, V = qkv(1, 5)
    out = dense_masked_attention(Q, K, V, mask_full(GridShape((1, 1))))
    assert np.array_equal(out, V)


def test_equal_logits_average():
    Q = np.zeros((2, 3), np.float32)
    K = np.ones((2, 3), np.float32)
    V = np.array([[1, 2, 3], [3, 4, 5]], np.float32)
    out = dense_masked_attention(Q, K, V, mask_full(GridShape((2,))))
    assert np.allclose(out, [[2, 3, 4], [2, 3, 4]], atol=1e-7)


def test_single_allowed_key():
    Q, K, V = qkv(2, 4)
    mask = TokenMask(GridShape((2,)), lambda qi, ki: ~((qi[:, None] == 0) & (ki[None, :] == 1)))
    out = dense_masked_attention(Q, K, V, mask)
    assert np.array_equal(out[0], V[0])


def test_weights_basic():
    Q, K, _ = qkv(1, 3)
    assert attention_weights(Q, K, mask_full(GridShape((1,)))).tolist() == [[1.0]]
    z = np.zeros((4, 2), np.float32)
    assert np.allclose(attention_weights(z, z, mask_full(GridShape((2, 2)))), 0.25, atol=0)


def test_shift_invariance_via_logit_offset():
    # an extra feature column adds a constant offset to every logit of a query row
    n, d = 12, 6
    Q, K, _ = qkv(n, d, seed=3)
    cfg = AttnConfig(d)
    mask = plan_to_token_mask(plan_grat_b(partition(GridShape((4, 3)), GroupShape((2, 1))), 1))
    base = attention_weights(Q, K, mask, cfg)
    offsets = np.random.default_rng(4).uniform(-30, 30, n).astype(np.float32)
    Q2 = np.hstack([Q, (offsets / cfg.scale)[:, None]]).astype(np.float32)
    K2 = np.hstack([K, np.ones((n, 1), np.float32)])
    shifted = attention_weights(Q2, K2, mask, AttnConfig(d + 1, cfg.scale))
    assert np.abs(shifted - base).max() <= 1e-6
    assert (shifted.argmax(1) == base.argmax(1)).all()


def test_dense_matches_naive_python():
    grid = GridShape((3, 4))
    Q, K, V = qkv(12, 3, seed=7)
    mask = plan_to_token_mask(plan_for_scheme(GratX((1, 2)), grid))
    dense = mask.dense()
    ref = oracles.naive_attention(Q.tolist(), K.tolist(), V.tolist(), lambda i, j: dense[i, j], 1 / np.sqrt(3))
    assert np.abs(dense_masked_attention(Q, K, V, mask) - np.array(ref)).max() <= 1e-6


def test_single_group_equals_unmasked_dense():
    grid = GridShape((4, 4))
    Q, K, V = qkv(16, 8, seed=1)
    plan = plan_full(partition(grid, GroupShape((4, 4))))
    out = block_sparse_attention(Q, K, V, plan)
    assert np.abs(out - dense_masked_attention(Q, K, V, mask_full(grid))).max() <= 1e-6


@pytest.mark.parametrize("scheme", [GratB((1, 1), (2, 2)), GratX((4, 2)), Neighborhood(3), CrissCrossToken()])
def test_constant_values(scheme):
    grid = GridShape((8, 8))
    Q, K, _ = qkv(64, 4, seed=2)
    c = np.array([0.5, -1.25, 3.0, 7.0], np.float32)
    V = np.tile(c, (64, 1))
    out = block_sparse_attention(Q, K, V, plan_for_scheme(scheme, grid))
    assert np.allclose(out, c, atol=1e-6)


def test_grat_b_16x16_matches_dense():
    grid = GridShape((16, 16))
    Q, K, V = qkv(256, 32, seed=11)
    plan = plan_grat_b(partition(grid, GroupShape((4, 4))), (1, 1))
    out = block_sparse_attention(Q, K, V, plan)
    ref = dense_masked_attention(Q, K, V, plan_to_token_mask(plan))
    assert np.abs(out - ref).max() <= 1e-5


SCHEMES_2D = [Full((2, 2)), GratB((1, 1), (2, 2)), GratB((0, 2), (4, 1)), GratX((2, 4)),
              Neighborhood((3, 5)), CircularRadius(2.5), CrissCrossToken()]
SCHEMES_3D = [Full((2, 2, 2)), GratB((1, 1, 1), (2, 2, 2)), GratX((1, 2, 2)), Neighborhood((3, 3, 3))]


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_three_executors_agree(data):
    rank3 = data.draw(st.booleans())
    grid = GridShape((4, 4, 4) if rank3 else (8, 8))
    scheme = data.draw(st.sampled_from(SCHEMES_3D if rank3 else SCHEMES_2D))
    d = data.draw(st.sampled_from([4, 16, 64]))
    Q, K, V = qkv(grid.n_tokens, d, seed=data.draw(st.integers(0, 10_000)))
    plan = plan_for_scheme(scheme, grid)
    mask = plan_to_token_mask(plan)
    ref = dense_masked_attention(Q, K, V, mask)
    assert np.abs(block_sparse_attention(Q, K, V, plan) - ref).max() <= 1e-5
    assert np.abs(scattered_attention(Q, K, V, token_index_lists(plan)) - ref).max() <= 1e-5


def test_index_lists_agree_with_mask():
    grid = GridShape((6, 6))
    plan = plan_for_scheme(GratB(1, (3, 2)), grid)
    from_plan = token_index_lists(plan)
    from_mask = mask_index_lists(plan_to_token_mask(plan))
    assert all(np.array_equal(a, b) for a, b in zip(from_plan, from_mask))


def test_pairs_touched_match_plan():
    grid = GridShape((12, 12))
    gg = partition(grid, GroupShape((2, 3)))
    plan = plan_grat_b(gg, (1, 1))
    Q, K, V = (relayout_group_major(t, gg)[0] for t in qkv(144, 4))
    _, touched = grouped_block_attention(Q, K, V, plan, return_pairs=True)
    g = gg.group_size
    for p, entry in enumerate(plan.entries):
        assert (touched[p * g:(p + 1) * g] == len(entry) * g).all()
    interior = gg.group_index((2, 2))
    assert touched[interior * g:(interior + 1) * g].sum() == 9 * g * g


def test_parallel_is_bit_identical():
    grid = GridShape((16, 16))
    Q, K, V = qkv(256, 16, seed=5)
    plan = plan_for_scheme(GratX((4, 4)), grid)
    serial = block_sparse_attention(Q, K, V, plan)
    again = block_sparse_attention(Q, K, V, plan)
    parallel = block_sparse_attention(Q, K, V, plan, workers=4)
    assert np.array_equal(serial, again)
    assert np.array_equal(serial, parallel)


def test_errors():
    grid = GridShape((2, 2))
    Q, K, V = qkv(4, 3)
    with pytest.raises(ShapeMismatch):
        dense_masked_attention(Q, K[:, :2], V, mask_full(grid))
    with pytest.raises(ShapeMismatch):
        dense_masked_attention(Q[:3], K[:3], V[:3], mask_full(grid))
    bad = Q.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NonFiniteInput):
        dense_masked_attention(bad, K, V, mask_full(grid))
    none = TokenMask(grid, lambda qi, ki: np.zeros((qi.size, ki.size), bool))
    with pytest.raises(FullyMaskedRow):
        dense_masked_attention(Q, K, V, none)
    plan = plan_full(partition(GridShape((3, 3)), GroupShape((1, 1))))
    with pytest.raises(PlanGridMismatch):
        grouped_block_attention(Q, K, V, plan)
    with pytest.raises(ValueError):
        AttnConfig(0)
    with pytest.raises(ValueError):
        AttnConfig(4, scale=-1.0)
