"""Masked attention executors.

Three routes compute the same masked softmax attention:

* :func:`dense_masked_attention` evaluates full score rows (chunked over
  queries) and zeroes forbidden keys; it is the reference.
* :func:`grouped_block_attention` walks each query group's attendable key
  groups in ascending order with a streaming (online) softmax, touching only
  permitted keys, which are contiguous after :func:`grat.grid.relayout_group_major`.
* :func:`scattered_attention` gathers each query token's permitted keys from
  the row-major layout through index lists.

Tensors are float32 numpy arrays; dot products and softmax normalisers are
accumulated in float64.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from grat.errors import FullyMaskedRow, NonFiniteInput, PlanGridMismatch, ShapeMismatch
from grat.grid import relayout_group_major, restore_token_order
from grat.maskplan import AttentionPlan, TokenMask

DENSE_CHUNK = 256


@dataclass(frozen=True)
class AttnConfig:
    head_dim: int
    scale: Optional[float] = None

    def __post_init__(self):
        if self.head_dim < 1:
            raise ValueError(f"head_dim must be >= 1, got {self.head_dim}")
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / math.sqrt(self.head_dim))
        elif not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def _config(cfg: Optional[AttnConfig], d: int) -> AttnConfig:
    if cfg is None:
        return AttnConfig(d)
    if cfg.head_dim != d:
        raise ShapeMismatch(f"config head_dim {cfg.head_dim} != tensor feature dim {d}")
    return cfg


def _check(n_tokens: int, *tensors: np.ndarray) -> list[np.ndarray]:
    out = []
    ref = None
    for t in tensors:
        t = np.asarray(t)
        if t.ndim != 2:
            raise ShapeMismatch(f"expected [N, d] tensors, got shape {t.shape}")
        if ref is None:
            ref = t.shape
        if t.shape != ref:
            raise ShapeMismatch(f"Q/K/V shapes differ: {ref} vs {t.shape}")
        if t.shape[0] != n_tokens:
            raise ShapeMismatch(f"token extent {t.shape[0]} != grid token count {n_tokens}")
        if not np.isfinite(t).all():
            raise NonFiniteInput("attention inputs contain NaN or Inf")
        out.append(t.astype(np.float64))
    return out


def _softmax_rows(logits: np.ndarray, allowed: np.ndarray, first_row: int) -> np.ndarray:
    logits = np.where(allowed, logits, -np.inf)
    top = logits.max(axis=1)
    if not np.isfinite(top).all():
        bad = first_row + int(np.flatnonzero(~np.isfinite(top))[0])
        raise FullyMaskedRow(f"query {bad} has no permitted keys")
    w = np.exp(logits - top[:, None])
    return w / w.sum(axis=1, keepdims=True)


def attention_weights(Q, K, mask: TokenMask, cfg: Optional[AttnConfig] = None) -> np.ndarray:
    """Post-softmax ``N x N`` weight matrix, exact zeros at forbidden pairs."""
    n = mask.grid.n_tokens
    q, k = _check(n, Q, K)
    cfg = _config(cfg, q.shape[1])
    out = np.empty((n, n), dtype=np.float32)
    keys = np.arange(n)
    for s in range(0, n, DENSE_CHUNK):
        rows = np.arange(s, min(n, s + DENSE_CHUNK))
        logits = (q[rows] @ k.T) * cfg.scale
        out[rows] = _softmax_rows(logits, mask.block(rows, keys), s)
    return out


def dense_masked_attention(Q, K, V, mask: TokenMask, cfg: Optional[AttnConfig] = None) -> np.ndarray:
    n = mask.grid.n_tokens
    q, k, v = _check(n, Q, K, V)
    cfg = _config(cfg, q.shape[1])
    out = np.empty(q.shape, dtype=np.float32)
    keys = np.arange(n)
    for s in range(0, n, DENSE_CHUNK):
        rows = np.arange(s, min(n, s + DENSE_CHUNK))
        logits = (q[rows] @ k.T) * cfg.scale
        out[rows] = _softmax_rows(logits, mask.block(rows, keys), s) @ v
    return out


def _run_groups(fn, n_groups: int, workers: Optional[int]) -> None:
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fn, range(n_groups)))
    else:
        for p in range(n_groups):
            fn(p)


def grouped_block_attention(Q, K, V, plan: AttentionPlan, cfg: Optional[AttnConfig] = None, *,
                            workers: Optional[int] = None, return_pairs: bool = False):
    """Block-sparse attention on group-major Q/K/V.

    Runs of adjacent key groups are read as one contiguous slab; the slabs of a
    query group are always consumed in ascending order, so results do not
    depend on ``workers``.  With ``return_pairs`` the per-query count of
    touched keys is returned alongside the output.
    """
    gg = plan.gg
    n, g = gg.grid.n_tokens, gg.group_size
    if len(plan.entries) != gg.n_groups:
        raise PlanGridMismatch("plan entries do not match its group grid")
    if np.asarray(Q).shape[:1] != (n,):
        raise PlanGridMismatch(f"query extent {np.asarray(Q).shape[:1]} != plan grid token count {n}")
    q, k, v = _check(n, Q, K, V)
    cfg = _config(cfg, q.shape[1])
    out = np.empty(q.shape, dtype=np.float32)
    touched = np.zeros(n, dtype=np.int64)

    def one_group(p: int) -> None:
        rows = slice(p * g, (p + 1) * g)
        qg = q[rows]
        run_max = np.full(g, -np.inf)
        norm = np.zeros(g)
        acc = np.zeros((g, q.shape[1]))
        for s, e in plan.key_spans(p):
            logits = (qg @ k[s:e].T) * cfg.scale
            new_max = np.maximum(run_max, logits.max(axis=1))
            rescale = np.exp(run_max - new_max)
            w = np.exp(logits - new_max[:, None])
            norm = norm * rescale + w.sum(axis=1)
            acc = acc * rescale[:, None] + w @ v[s:e]
            run_max = new_max
            touched[rows] += e - s
        out[rows] = acc / norm[:, None]

    _run_groups(one_group, gg.n_groups, workers)
    if return_pairs:
        return out, touched
    return out


def block_sparse_attention(Q, K, V, plan: AttentionPlan, cfg: Optional[AttnConfig] = None, *,
                           workers: Optional[int] = None) -> np.ndarray:
    """:func:`grouped_block_attention` on row-major inputs, output in row-major order."""
    gg = plan.gg
    qg, perm = relayout_group_major(Q, gg)
    kg, _ = relayout_group_major(K, gg)
    vg, _ = relayout_group_major(V, gg)
    return restore_token_order(grouped_block_attention(qg, kg, vg, plan, cfg, workers=workers), perm)


def token_index_lists(plan: AttentionPlan) -> list[np.ndarray]:
    """Row-major permitted key indices of every query token (shared within a group)."""
    gg = plan.gg
    g = gg.group_size
    perm = gg.permutation
    lists: list[np.ndarray] = [None] * gg.grid.n_tokens  # type: ignore[list-item]
    for p, row in enumerate(plan.entries):
        keys = np.sort(np.concatenate([perm[m * g:(m + 1) * g] for m in row]))
        for t in perm[p * g:(p + 1) * g]:
            lists[t] = keys
    return lists


def mask_index_lists(mask: TokenMask) -> list[np.ndarray]:
    n = mask.grid.n_tokens
    return [np.flatnonzero(mask.row(i)) for i in range(n)]


def scattered_attention(Q, K, V, index_lists: Sequence[np.ndarray],
                        cfg: Optional[AttnConfig] = None) -> np.ndarray:
    """Per-token gather over row-major K/V: same arithmetic, non-contiguous reads."""
    n = len(index_lists)
    q, k, v = _check(n, Q, K, V)
    cfg = _config(cfg, q.shape[1])
    out = np.empty(q.shape, dtype=np.float32)
    for i, keys in enumerate(index_lists):
        if len(keys) == 0:
            raise FullyMaskedRow(f"query {i} has no permitted keys")
        logits = (k[keys] @ q[i]) * cfg.scale
        w = np.exp(logits - logits.max())
        out[i] = (w @ v[keys]) / w.sum()
    return out
