"""Desk-scale timing of the dense, grouped-block and scattered-gather executors.

All executors compute the same masked attention; the grouped and scattered
paths do identical arithmetic, so the gap between them isolates memory
layout.  Outputs are checked against each other before anything is timed.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from grat.attn import (
    AttnConfig,
    block_sparse_attention,
    dense_masked_attention,
    grouped_block_attention,
    scattered_attention,
    token_index_lists,
)
from grat.errors import InvalidReps, OracleMismatch
from grat.grid import GridShape, relayout_group_major
from grat.maskplan import SchemeConfig, plan_for_scheme, plan_to_token_mask, scheme_to_dict

MAX_DENSE_TOKENS = 16384
AGREEMENT_TOL = 1e-5


@dataclass
class BenchReport:
    scheme: dict
    grid: list[int]
    group: list[int]
    d: int
    reps: int
    seed: int
    pair_count: int
    dense_pairs: int
    timings: dict[str, dict[str, float]]
    speedup: dict[str, float]
    max_abs_dev: dict[str, float]
    output_sha256: str
    workers: Optional[int] = None
    samples: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        lines = [
            f"scheme {self.scheme['name']}  grid {'x'.join(map(str, self.grid))}  "
            f"group {'x'.join(map(str, self.group))}  d={self.d}  reps={self.reps}",
            f"pairs {self.pair_count} of {self.dense_pairs} "
            f"({100.0 * (1 - self.pair_count / self.dense_pairs):.2f}% sparsity)",
            f"{'executor':<18}{'median s':>11}{'p10 s':>11}{'p90 s':>11}{'vs dense':>10}",
        ]
        for name, t in self.timings.items():
            lines.append(
                f"{name:<18}{t['median']:>11.4f}{t['p10']:>11.4f}{t['p90']:>11.4f}{self.speedup[name]:>9.2f}x"
            )
        return "\n".join(lines)


def _summary(samples: list[float]) -> dict[str, float]:
    a = np.asarray(samples)
    return {"median": float(np.median(a)), "p10": float(np.percentile(a, 10)), "p90": float(np.percentile(a, 90))}


def run_bench(scheme: SchemeConfig, grid: GridShape, d: int = 64, reps: int = 5, seed: int = 0,
              workers: Optional[int] = None) -> BenchReport:
    if reps < 3:
        raise InvalidReps(f"need at least 3 repetitions for a median, got {reps}")
    n = grid.n_tokens
    if n > MAX_DENSE_TOKENS:
        raise ValueError(f"{n} tokens exceeds the dense baseline cap of {MAX_DENSE_TOKENS}")
    rng = np.random.default_rng(seed)
    Q, K, V = (rng.standard_normal((n, d), dtype=np.float32) for _ in range(3))
    cfg = AttnConfig(d)

    plan = plan_for_scheme(scheme, grid)
    mask = plan_to_token_mask(plan)
    lists = token_index_lists(plan)

    executors: dict[str, Callable[[], np.ndarray]] = {
        "dense": lambda: dense_masked_attention(Q, K, V, mask, cfg),
        "grouped": lambda: block_sparse_attention(Q, K, V, plan, cfg),
        "scattered": lambda: scattered_attention(Q, K, V, lists, cfg),
    }
    if workers and workers > 1:
        executors["grouped_parallel"] = lambda: block_sparse_attention(Q, K, V, plan, cfg, workers=workers)

    # warm-up pass doubles as the agreement check
    outputs = {name: fn() for name, fn in executors.items()}
    ref = outputs["dense"]
    dev = {name: float(np.abs(out - ref).max()) for name, out in outputs.items() if name != "dense"}
    for name, err in dev.items():
        if not err <= AGREEMENT_TOL:
            raise OracleMismatch(f"{name} deviates from dense by {err:.3g} (> {AGREEMENT_TOL})")
    if "grouped_parallel" in outputs and not np.array_equal(outputs["grouped"], outputs["grouped_parallel"]):
        raise OracleMismatch("parallel grouped output is not bit-identical to serial")

    qg, _ = relayout_group_major(Q, plan.gg)
    kg, _ = relayout_group_major(K, plan.gg)
    vg, _ = relayout_group_major(V, plan.gg)
    _, touched = grouped_block_attention(qg, kg, vg, plan, cfg, return_pairs=True)
    grouped_pairs = int(touched.sum())
    scattered_pairs = int(sum(len(k) for k in lists))
    if grouped_pairs != scattered_pairs or grouped_pairs != plan.token_pairs():
        raise OracleMismatch(f"pair counts differ: grouped {grouped_pairs}, scattered {scattered_pairs}")

    samples: dict[str, list[float]] = {name: [] for name in executors}
    for _ in range(reps):
        for name, fn in executors.items():
            t0 = time.perf_counter()
            fn()
            samples[name].append(time.perf_counter() - t0)

    timings = {name: _summary(s) for name, s in samples.items()}
    dense_median = timings["dense"]["median"]
    return BenchReport(
        scheme=scheme_to_dict(scheme),
        grid=list(grid.dims),
        group=list(plan.gg.group.gdims),
        d=d,
        reps=reps,
        seed=seed,
        pair_count=grouped_pairs,
        dense_pairs=n * n,
        timings=timings,
        speedup={name: dense_median / t["median"] for name, t in timings.items()},
        max_abs_dev=dev,
        output_sha256=hashlib.sha256(outputs["grouped"].tobytes()).hexdigest(),
        workers=workers,
        samples=samples,
    )
