"""Grouped structured sparse attention: grid grouping, attendable-set plans,
block-sparse execution against a dense oracle, and analytic sparsity metrics."""

from grat.attn import (
    AttnConfig,
    attention_weights,
    block_sparse_attention,
    dense_masked_attention,
    grouped_block_attention,
    scattered_attention,
)
from grat.grid import GridShape, GroupGrid, GroupShape, partition, relayout_group_major, restore_token_order, token_to_group
from grat.maskplan import (
    AttentionPlan,
    CircularRadius,
    CrissCrossToken,
    Full,
    GratB,
    GratX,
    Neighborhood,
    TokenMask,
    plan_for_scheme,
    plan_full,
    plan_grat_b,
    plan_grat_x,
    plan_to_token_mask,
)
from grat.metrics import MaskStats, attention_mass_by_distance, complexity_estimate, farthest_distance, mask_stats

__version__ = "0.1.0"
