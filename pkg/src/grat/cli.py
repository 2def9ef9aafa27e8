"""``grat`` command line: stats, table, run, bench, massdist.

Exit codes: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from grat import bench as bench_mod
from grat.attn import AttnConfig, block_sparse_attention, dense_masked_attention
from grat.errors import GratError, ShapeMismatch
from grat.grid import GridShape, parse_dims
from grat.maskplan import (
    CircularRadius,
    CrissCrossToken,
    Full,
    GratB,
    GratX,
    Neighborhood,
    SchemeConfig,
    describe,
    plan_for_scheme,
    plan_to_token_mask,
)
from grat.metrics import attention_mass_by_distance, mask_stats
from grat.tensorio import dump_json, read_tensor, write_tensor

SCHEMES = ("full", "neighborhood", "circular", "crisscross", "grat-b", "grat-x")

# Values reported for the original GPU setting; displayed next to ours, never asserted.
IMAGE_SOURCE = "Flux.1-dev, 8192x8192 image (512x512 latent tokens), single A100"
VIDEO_SOURCE = "HunyuanVideo, 30 s video (32x48x80 latent tokens), single A100"
PRESETS = {
    "image": {
        "grid": (512, 512),
        "source": IMAGE_SOURCE,
        "rows": [
            (Full(), 0.0, 724),
            (CircularRadius(16), 99.50, 16),
            (Neighborhood((32, 32)), 99.42, 23),
            (GratB((1, 1), (16, 16)), 99.03, 45),
            (GratX((16, 16)), 93.67, 512),
        ],
    },
    "video": {
        "grid": (32, 48, 80),
        "source": VIDEO_SOURCE,
        "rows": [
            (Full(), 0.0, 98),
            (GratB((1, 1, 1), (4, 8, 8)), 94.3, 24),
            (GratX((4, 8, 8)), 60.8, 81),
        ],
    },
}
CONVENTION_NOTE = (
    "ours: unit-spaced lattice, Euclidean distance, clamped boundaries, N^2 denominator; "
    "grid diameter uses (dim-1) extents, so full-attention farthest is sqrt(sum (dim-1)^2). "
    "Reported values come from a different, unstated counting convention and are shown for reference."
)


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = parse_dims(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not dims or any(v < 1 for v in dims):
        raise argparse.ArgumentTypeError(f"extents must be positive: {text!r}")
    return dims


def _at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v

    return parse


def _add_scheme_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--grid", type=_dims, required=True, help="HxW or TxHxW")
    p.add_argument("--group", type=_dims, help="group shape, e.g. 16x16 or 4x8x8")
    p.add_argument("--b", type=_dims, default=None, help="surrounding blocks per axis (scalar broadcasts)")
    p.add_argument("--window", type=_dims, default=None, help="neighbourhood window per axis")
    p.add_argument("--radius", type=float, default=None)


def _scheme(args, parser: argparse.ArgumentParser) -> SchemeConfig:
    name = args.scheme
    if name in ("grat-b", "grat-x") and args.group is None:
        parser.error(f"--group is required for {name}")
    if name == "full":
        return Full(args.group)
    if name == "neighborhood":
        if args.window is None:
            parser.error("--window is required for neighborhood")
        return Neighborhood(args.window)
    if name == "circular":
        if args.radius is None or args.radius < 0:
            parser.error("--radius >= 0 is required for circular")
        return CircularRadius(args.radius)
    if name == "crisscross":
        return CrissCrossToken()
    if name == "grat-b":
        return GratB(args.b if args.b is not None else (1,), args.group)
    return GratX(args.group)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grat", description="Grouped structured sparse attention toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="pair count, FLOPs sparsity and farthest token of a scheme")
    _add_scheme_args(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("table", help="multi-scheme comparison for a preset grid")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("run", help="block-sparse attention on .grt tensors")
    p.add_argument("--q", required=True)
    p.add_argument("--k", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--out", required=True)
    _add_scheme_args(p)
    p.add_argument("--verify", action="store_true", help="also run the dense oracle and report the deviation")
    p.add_argument("--workers", type=_at_least(1), default=None)

    p = sub.add_parser("bench", help="time dense, grouped and scattered executors")
    _add_scheme_args(p)
    p.add_argument("--d", type=_at_least(1), default=64)
    p.add_argument("--reps", type=_at_least(3), default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_at_least(1), default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("massdist", help="attention mass by normalised distance")
    p.add_argument("--weights", required=True)
    p.add_argument("--grid", type=_dims, required=True)
    p.add_argument("--bins", type=_at_least(1), default=20)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--csv", default=None, help="write bin_low,bin_high,mass rows here")
    return parser


def cmd_stats(args, parser) -> int:
    scheme = _scheme(args, parser)
    st = mask_stats(scheme, GridShape(args.grid))
    if args.json:
        print(dump_json(st.to_json()), end="")
        return 0
    print(f"scheme    {scheme.name} ({describe(scheme)})")
    print(f"grid      {'x'.join(map(str, st.grid))} ({st.n_tokens} tokens)")
    print(f"pairs     {st.pair_count}")
    print(f"sparsity  {st.sparsity_percent:.2f}%")
    print(f"farthest  {st.farthest:.2f} (ceil {st.farthest_ceil})")
    print(f"keys/query min {st.per_query_min} max {st.per_query_max} mean {st.per_query_mean:.1f}")
    return 0


def table_rows(preset: str) -> dict:
    spec = PRESETS[preset]
    grid = GridShape(spec["grid"])
    rows = []
    for scheme, ref_sparsity, ref_far in spec["rows"]:
        st = mask_stats(scheme, grid)
        rows.append({
            "scheme": scheme.name,
            "config": describe(scheme),
            "stats": st.to_json(),
            "reported": {"sparsity_percent": ref_sparsity, "farthest": ref_far},
            "gap": {
                "sparsity_pp": round(st.sparsity_percent - ref_sparsity, 4),
                "farthest": st.farthest_ceil - ref_far,
            },
        })
    return {"preset": preset, "grid": list(grid.dims), "source": spec["source"], "rows": rows,
            "note": CONVENTION_NOTE}


def cmd_table(args, parser) -> int:
    doc = table_rows(args.preset)
    if args.json:
        print(dump_json(doc), end="")
        return 0
    print(f"preset {doc['preset']}: grid {'x'.join(map(str, doc['grid']))}; reported = {doc['source']}")
    head = f"{'scheme':<14}{'config':<24}{'sparsity':>10}{'reported':>10}{'farthest':>10}{'ceil':>6}{'reported':>10}"
    print(head)
    print("-" * len(head))
    for r in doc["rows"]:
        st, ref = r["stats"], r["reported"]
        print(f"{r['scheme']:<14}{r['config']:<24}{100 * st['flops_sparsity']:>9.2f}%{ref['sparsity_percent']:>9.2f}%"
              f"{st['farthest']:>10.2f}{st['farthest_ceil']:>6}{ref['farthest']:>10}")
    print(f"note: {doc['note']}")
    return 0


def _load_qkv(args, n: int):
    out = []
    for flag in ("q", "k", "v"):
        t = read_tensor(getattr(args, flag))
        if t.ndim != 2 or t.shape[0] != n:
            raise ShapeMismatch(f"--{flag} has shape {t.shape}, expected [{n}, d]")
        out.append(t)
    return out


def cmd_run(args, parser) -> int:
    scheme = _scheme(args, parser)
    grid = GridShape(args.grid)
    Q, K, V = _load_qkv(args, grid.n_tokens)
    plan = plan_for_scheme(scheme, grid)
    cfg = AttnConfig(Q.shape[1])
    out = block_sparse_attention(Q, K, V, plan, cfg, workers=args.workers)
    write_tensor(args.out, out)
    print(f"wrote {args.out} shape {list(out.shape)}; pairs {plan.token_pairs()}")
    if args.verify:
        ref = dense_masked_attention(Q, K, V, plan_to_token_mask(plan), cfg)
        print(f"max_abs_deviation {float(np.abs(out - ref).max()):.3e}")
    return 0


def cmd_bench(args, parser) -> int:
    scheme = _scheme(args, parser)
    report = bench_mod.run_bench(scheme, GridShape(args.grid), d=args.d, reps=args.reps, seed=args.seed,
                                 workers=args.workers)
    if args.json:
        print(dump_json(report.to_json()), end="")
    else:
        print(report.format_table())
    return 0


def cmd_massdist(args, parser) -> int:
    grid = GridShape(args.grid)
    w = read_tensor(args.weights)
    hist = attention_mass_by_distance(w, grid, args.bins, threshold=args.threshold)
    if args.csv:
        Path(args.csv).write_text(hist.to_csv(), encoding="utf-8")
    print(f"mass below {args.threshold:g} normalized distance: {100 * hist.fraction_below:.2f}%")
    print(f"rows {hist.n_rows}  total mass {hist.total:.6f}  diameter {hist.d_max:.3f}")
    if not args.csv:
        print(hist.to_csv(), end="")
    return 0


COMMANDS = {"stats": cmd_stats, "table": cmd_table, "run": cmd_run, "bench": cmd_bench, "massdist": cmd_massdist}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except (GratError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
