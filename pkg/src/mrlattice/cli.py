"""Command-line interface: world generation, table precompute, planning, bench, report.

Exit codes: 0 on success, 2 on input errors, 3 when the plan subcommand fails
to find a trajectory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bench import (
    ALL_METHODS,
    Method,
    run_suite,
    write_results_csv,
)
from .core import ConfigError, LatticeMode, PlannerConfig, State, load_config, vec3
from .heuristic import load_or_build_table, table_fingerprint
from .reports import ReportError, f_histogram, write_histogram_csv, write_histogram_svg, write_trajectory_svg
from .search import PlanningInputError, plan, write_trace
from .world import (
    WorldFormatError,
    WorldGenError,
    WorldGenParams,
    build_distance_field,
    generate_world,
    load_world,
    save_world,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOPLAN = 3


def _parse_vec(text, n_expected, what):
    parts = text.split(",")
    if len(parts) not in n_expected:
        raise PlanningInputError(f"{what} needs {' or '.join(map(str, n_expected))} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise PlanningInputError(f"bad number in {what}: {text!r}") from exc


def _parse_size(text):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise PlanningInputError(f"size must be WIDTHxDEPTHxHEIGHT, got {text!r}")
    return tuple(float(p) for p in parts)


def _load_cfg(path) -> PlannerConfig:
    if path is None:
        return PlannerConfig()
    return load_config(path)


def cmd_gen_world(args) -> int:
    params = WorldGenParams(
        seed=args.seed,
        n_buildings=args.buildings,
        world_size=_parse_size(args.size),
        cell_size=args.cell,
    )
    world = generate_world(params)
    save_world(world, args.out)
    print(f"wrote {args.out}: {world.dims[0]}x{world.dims[1]}x{world.dims[2]} cells, "
          f"{len(world.boxes)} boxes")
    return EXIT_OK


def cmd_precompute(args) -> int:
    cfg = _load_cfg(args.config)
    table = load_or_build_table(cfg, args.max_dist, cache_path=args.out)
    print(f"wrote {args.out}: {table.cost.shape[0]}x{table.cost.shape[1]} cells, "
          f"fingerprint {table.fingerprint()}")
    return EXIT_OK


def _table_for(cfg, world, table_path):
    diag = float(np.linalg.norm(world.extent))
    if table_path:
        return load_or_build_table(cfg, diag, cache_path=table_path)
    return load_or_build_table(cfg, diag)


def cmd_plan(args) -> int:
    cfg = _load_cfg(args.config)
    world = load_world(args.world)
    dfield = build_distance_field(world)
    table = _table_for(cfg, world, args.table)
    sv = _parse_vec(args.start, {3, 6}, "--start")
    gv = _parse_vec(args.goal, {3}, "--goal")
    start = State(vec3(sv[0], sv[1], sv[2]),
                  vec3(*sv[3:6]) if len(sv) == 6 else vec3(0.0, 0.0, 0.0))
    goal = State(vec3(*gv), vec3(0.0, 0.0, 0.0))
    result = plan(start, goal, LatticeMode(args.mode), args.heuristic, args.scheme,
                  cfg, dfield, table, trace=args.trace is not None)
    print(f"status={result.status.value} expansions={result.stats.expansions} "
          f"pushes={result.stats.pushes} cost={result.cost:.6g} "
          f"wall_s={result.stats.wall_time:.3f}")
    if args.trace:
        write_trace(result.stats, args.trace)
        print(f"wrote {args.trace}")
    if not result.found:
        return EXIT_NOPLAN
    if args.svg:
        label = f"{args.mode}:{args.heuristic}:{args.scheme}"
        write_trajectory_svg(args.svg, world, [(label, result.trajectory, start)], goal.position)
        print(f"wrote {args.svg}")
    return EXIT_OK


def _parse_matrix(text):
    if text == "all":
        return list(ALL_METHODS)
    return [Method.parse(part) for part in text.split(",") if part]


def cmd_bench(args) -> int:
    cfg = _load_cfg(args.config)
    world = load_world(args.world)
    methods = _parse_matrix(args.matrix)
    table = _table_for(cfg, world, args.table)
    os.makedirs(args.out_dir, exist_ok=True)

    def progress(method, task, ep):
        if args.verbose:
            print(f"  {method} task {task}: {ep.status} steps={ep.replan_steps} "
                  f"max_exp={ep.max_replanning_expansions}")

    rows, agg, captures = run_suite(
        world, methods, args.tasks, args.seed, cfg, table=table,
        capture=args.capture, progress=progress,
    )
    out_csv = os.path.join(args.out_dir, "results.csv")
    write_results_csv(out_csv, rows, agg)
    print(f"wrote {out_csv} ({len(rows)} episodes)")
    if args.capture:
        _write_captures(args.out_dir, world, captures)
    return EXIT_OK


def _write_captures(out_dir, world, captures) -> None:
    trace_dir = os.path.join(out_dir, "traces")
    traj_dir = os.path.join(out_dir, "trajectories")
    os.makedirs(trace_dir, exist_ok=True)
    os.makedirs(traj_dir, exist_ok=True)
    save_world(world, os.path.join(out_dir, "world.txt"))
    from .search import sample_trajectory

    for (method, task), ep in captures.items():
        slug = method.replace(":", "_")
        with open(os.path.join(trace_dir, f"{slug}_task{task}.csv"), "w", encoding="utf-8") as fh:
            fh.write("f\n")
            for v in ep.f_values:
                fh.write(f"{v:.9g}\n")
        if ep.flown:
            pts = sample_trajectory(ep.flown, ep.flown[0].start, 0.05)
            with open(os.path.join(traj_dir, f"{slug}_task{task}.csv"), "w", encoding="utf-8") as fh:
                fh.write("x,y,z\n")
                for p in pts:
                    fh.write(f"{p[0]:.6f},{p[1]:.6f},{p[2]:.6f}\n")


def cmd_report(args) -> int:
    cfg = _load_cfg(args.config)
    trace_dir = os.path.join(args.in_dir, "traces")
    traj_dir = os.path.join(args.in_dir, "trajectories")
    if args.histogram:
        if not os.path.isdir(trace_dir) or not os.listdir(trace_dir):
            raise ReportError(
                f"no captured traces in {trace_dir}; run bench with --capture first"
            )
        bin_width = cfg.rho * cfg.tau1  # minimal one-action cost
        for name in sorted(os.listdir(trace_dir)):
            fvals = []
            with open(os.path.join(trace_dir, name), "r", encoding="utf-8") as fh:
                fh.readline()
                fvals = [float(line) for line in fh if line.strip()]
            edges, counts = f_histogram(fvals, bin_width)
            stem = os.path.splitext(name)[0]
            write_histogram_csv(os.path.join(args.in_dir, f"hist_{stem}.csv"), edges, counts)
            write_histogram_svg(os.path.join(args.in_dir, f"hist_{stem}.svg"), edges, counts,
                                label=stem)
        print(f"wrote histograms for {len(os.listdir(trace_dir))} traces")
    if args.svg:
        world_path = os.path.join(args.in_dir, "world.txt")
        if not os.path.exists(world_path) or not os.path.isdir(traj_dir):
            raise ReportError(f"missing world.txt or trajectories/ in {args.in_dir}")
        world = load_world(world_path)
        polylines = []
        for name in sorted(os.listdir(traj_dir)):
            pts = []
            with open(os.path.join(traj_dir, name), "r", encoding="utf-8") as fh:
                fh.readline()
                for line in fh:
                    pts.append([float(x) for x in line.split(",")])
            polylines.append((os.path.splitext(name)[0], np.array(pts)))
        out = os.path.join(args.in_dir, "trajectories.svg")
        _write_polyline_svg(out, world, polylines)
        print(f"wrote {out}")
    return EXIT_OK


def _write_polyline_svg(path, world, polylines, size=800) -> None:
    from .reports import SvgMap, _STROKES, _height_color

    m = SvgMap(world, size=size)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    zmax = world.altitude_range[1]
    for b in world.boxes:
        x0, y0 = m.px(b.lo[0], b.hi[1])
        parts.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{(b.hi[0] - b.lo[0]) * m.scale:.2f}" '
            f'height="{(b.hi[1] - b.lo[1]) * m.scale:.2f}" fill="{_height_color(b.hi[2], zmax)}"/>'
        )
    for k, (label, pts) in enumerate(polylines):
        coords = " ".join(f"{m.px(p[0], p[1])[0]:.2f},{m.px(p[0], p[1])[1]:.2f}" for p in pts)
        parts.append(f'<polyline id="{label}" points="{coords}" fill="none" '
                     f'stroke="{_STROKES[k % len(_STROKES)]}" stroke-width="2"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrlattice",
                                 description="Multiresolution state-lattice trajectory planner")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-world", help="generate a procedural world file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--buildings", type=int, required=True)
    g.add_argument("--size", required=True, help="WxDxH in meters, e.g. 64x64x10")
    g.add_argument("--cell", type=float, default=0.25)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("precompute", help="build and cache the 1D heuristic table")
    p.add_argument("--config", default=None)
    p.add_argument("--max-dist", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompute)

    q = sub.add_parser("plan", help="plan a single trajectory")
    q.add_argument("--world", required=True)
    q.add_argument("--config", default=None)
    q.add_argument("--mode", choices=[m.value for m in LatticeMode], default="mres-var")
    q.add_argument("--heuristic", choices=["h1d", "htime", "zero"], default="h1d")
    q.add_argument("--scheme", choices=["astar", "level"], default="level")
    q.add_argument("--start", required=True, help="x,y,z or x,y,z,vx,vy,vz")
    q.add_argument("--goal", required=True, help="x,y,z")
    q.add_argument("--table", default=None, help="1D table cache path")
    q.add_argument("--trace", default=None, help="write per-expansion f-value CSV here")
    q.add_argument("--svg", default=None, help="write a top-down SVG here")
    q.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="run the replanning benchmark suite")
    b.add_argument("--world", required=True)
    b.add_argument("--config", default=None)
    b.add_argument("--tasks", type=int, default=25)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--matrix", default="all",
                   help="comma-separated mode:heuristic:scheme triples, or 'all'")
    b.add_argument("--table", default=None)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--capture", action="store_true",
                   help="store f-traces and flown trajectories for 'report'")
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="render histograms and SVGs from bench output")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--config", default=None)
    r.add_argument("--histogram", action="store_true")
    r.add_argument("--svg", action="store_true")
    r.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PlanningInputError, WorldFormatError, WorldGenError,
            ReportError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
