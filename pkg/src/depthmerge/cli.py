"""Command-line surface: merge, bench and compare subcommands.

Exit codes: 0 success, 2 usage error (argparse), 3 input or format error,
4 infeasible merge schedule.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .encoder import EncoderConfig, vit_forward
from .errors import DepthMergeError, ScheduleInfeasibleError
from .formats import load_depth_map, load_feature_file, render_merge_map
from .merge import SCHEDULE_KINDS, build_schedule
from .metrics import compare_schedules, depth_levels_for, run_benchmark, spatial_dispersion
from .spatial import DEFAULT_LEVELS, DEFAULT_TOKEN_DIM, PatchGrid
from .synthetic import synthetic_tokens, two_plane_scene
from .trace import save_trace

EXIT_INPUT_ERROR = 3
EXIT_INFEASIBLE = 4


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 27x27, got {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--features", metavar="PATH", help="TSAF feature file (seeded synthetic tokens when omitted)")
    p.add_argument("--depth", metavar="PATH", help="depth map: PGM (P5/P2) or TSAD raw floats")
    p.add_argument("--retain", type=float, default=0.1, help="fraction of tokens to keep (default 0.1)")
    p.add_argument("--schedule", choices=SCHEDULE_KINDS, default="increase")
    p.add_argument("--alpha", type=float, default=0.5, help="constant alpha for the uniform schedule")
    p.add_argument("--layers", type=int, default=27)
    p.add_argument("--grid", type=_parse_grid, default=(27, 27), metavar="WxH")
    p.add_argument("--dim", type=int, default=64, help="encoder model dim")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="emit machine-readable JSON on stdout")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthmerge",
        description="Depth-guided token merging for transformer encoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_merge = sub.add_parser("merge", help="run the encoder and write the merge trace")
    _add_common(p_merge)
    p_merge.add_argument("--out-trace", metavar="PATH", help="write the merge trace JSON here")
    p_merge.add_argument("--out-svg", metavar="PATH", help="write the merge-map SVG here")

    p_bench = sub.add_parser("bench", help="throughput of merged vs unmerged forward passes")
    _add_common(p_bench)
    p_bench.add_argument("--images", type=int, default=4)
    p_bench.add_argument("--repetitions", type=int, default=3)

    p_cmp = sub.add_parser("compare", help="spatial-coherence table across schedules")
    _add_common(p_cmp)
    return parser


def _load_inputs(args):
    """Features, depth map and grid from files or the seeded generator."""
    grid_w, grid_h = args.grid
    depth = None
    if args.depth:
        depth = load_depth_map(args.depth)
        if depth.width % grid_w or depth.height % grid_h:
            raise DepthMergeError(
                f"depth {depth.width}x{depth.height} not divisible by grid {grid_w}x{grid_h}"
            )
        px, py = depth.width // grid_w, depth.height // grid_h
        if px != py:
            raise DepthMergeError(f"non-square patches: {px}x{py} pixels")
        grid = PatchGrid(grid_w, grid_h, px)
    else:
        grid = PatchGrid(grid_w, grid_h, 1)

    if args.features:
        features = load_feature_file(args.features)
        if features.shape != (grid.num_patches, args.dim):
            raise DepthMergeError(
                f"feature file is {features.shape[0]}x{features.shape[1]}, "
                f"need {grid.num_patches}x{args.dim}"
            )
    elif depth is not None or args.command == "merge":
        features = synthetic_tokens(grid, args.dim, args.seed)
    else:
        features, depth = two_plane_scene(grid, args.dim, args.seed)
    return features, depth, grid


def _config(args, grid: PatchGrid) -> EncoderConfig:
    return EncoderConfig(
        layers=args.layers, model_dim=args.dim, heads=args.heads,
        grid=grid, seed=args.seed,
    )


def cmd_merge(args) -> int:
    features, depth, grid = _load_inputs(args)
    config = _config(args, grid)
    schedule = build_schedule(
        args.schedule, grid.num_patches, args.retain, args.layers,
        uniform_alpha=args.alpha,
    )
    state, trace = vit_forward(features, depth, config, schedule)
    if args.out_trace:
        save_trace(trace, args.out_trace)
    if args.out_svg:
        svg = render_merge_map(trace, grid, len(trace.final_groups))
        with open(args.out_svg, "w", encoding="utf-8") as fh:
            fh.write(svg)
    dispersion = spatial_dispersion(trace, grid, depth_levels_for(depth, grid))
    if args.json:
        print(json.dumps({
            "tokens_initial": grid.num_patches,
            "tokens_final": state.num_tokens,
            "layers": args.layers,
            "schedule": args.schedule,
            "retain": args.retain,
            "dispersion": dispersion,
            "trace": args.out_trace,
            "svg": args.out_svg,
        }))
    else:
        wrote = ", ".join(p for p in (args.out_trace, args.out_svg) if p) or "nothing written"
        print(
            f"merged {grid.num_patches} -> {state.num_tokens} tokens over "
            f"{args.layers} layers ({args.schedule}, retain {args.retain:g}, "
            f"dispersion {dispersion:.4f}); {wrote}"
        )
    return 0


def cmd_bench(args) -> int:
    if args.images < 1 or args.repetitions < 1:
        raise DepthMergeError("bench needs images >= 1 and repetitions >= 1")
    grid = PatchGrid(args.grid[0], args.grid[1], 1)
    config = _config(args, grid)
    reports = run_benchmark(config, images=args.images, repetitions=args.repetitions)
    if args.json:
        print(json.dumps([r.as_dict() for r in reports]))
    else:
        print(f"{'schedule':>12} {'retain':>7} {'tokens':>11} {'ms/img':>8} {'im/s':>7} {'coherence':>10}")
        for r in reports:
            print(
                f"{r.schedule:>12} {r.retain:>7.2f} "
                f"{r.tokens_initial:>5}->{r.tokens_final:<5} "
                f"{r.wall_time_per_image * 1e3:>8.1f} {r.throughput:>7.2f} "
                f"{r.coherence:>10.4f}"
            )
    return 0


def cmd_compare(args) -> int:
    features, depth, grid = _load_inputs(args)
    if depth is None:
        raise DepthMergeError("compare needs a depth map (give --depth or omit --features)")
    config = _config(args, grid)
    rows = compare_schedules(
        features, depth, args.retain, config, uniform_alpha=args.alpha
    )
    if args.json:
        print(json.dumps({kind: value for kind, value in rows}))
    else:
        print(f"{'schedule':>12} {'dispersion':>11}")
        for kind, value in rows:
            print(f"{kind:>12} {value:>11.4f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"merge": cmd_merge, "bench": cmd_bench, "compare": cmd_compare}[args.command]
    try:
        return handler(args)
    except ScheduleInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DepthMergeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
