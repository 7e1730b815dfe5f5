"""Benchmark orchestration: tasks, the 1 Hz replanning loop, and CSV results.

An episode plans, flies one second along the result, recenters the grid, and
replans until the goal cell is reached; per-step statistics fold into
per-episode maxima the way the evaluation protocol prescribes. Aggregates are
computed on solved-task intersections: all compared methods for the overview
tables, pairs differing in a single component for the head-to-head ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LatticeMode, PlannerConfig, State, Vec3, derive_resolutions, snap_to_grid, vec3
from .heuristic import Heuristic1DTable, load_or_build_table
from .lattice import make_grid
from .search import (
    SearchStatus,
    plan,
    sample_trajectory,
    trajectory_cost,
    trajectory_cost_until,
    trajectory_duration,
    trajectory_state_at,
)
from .world import DistanceField, VoxelWorld, build_distance_field, reveal_boxes

_TOL = 1e-9


class TaskGenError(RuntimeError):
    """Goal sampling rejection budget exhausted."""


@dataclass(frozen=True)
class Task:
    id: int
    start: State
    goal: Vec3  # zero-velocity goal position
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "goal", vec3(self.goal))


@dataclass(frozen=True)
class Method:
    mode: LatticeMode
    heuristic: str  # h1d | htime | zero
    scheme: str  # astar | level

    @property
    def name(self) -> str:
        return f"{self.mode.value}:{self.heuristic}:{self.scheme}"

    @classmethod
    def parse(cls, text: str) -> "Method":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"method must be mode:heuristic:scheme, got {text!r}")
        return cls(LatticeMode(parts[0]), parts[1], parts[2])


ALL_METHODS = tuple(
    Method(mode, heur, scheme)
    for mode in (LatticeMode.UNIFORM, LatticeMode.MRES_FIXED, LatticeMode.MRES_VARIABLE)
    for heur in ("h1d", "htime")
    for scheme in ("astar", "level")
)


@dataclass
class EpisodeMetrics:
    success: bool
    replan_steps: int
    max_replanning_expansions: int
    max_replanning_time: float
    cost: float
    status: str  # found | expansion-limit | exhausted | step-budget

    # optional captures for reporting
    f_values: list = field(default_factory=list)
    flown: tuple = ()  # executed primitives in order
    replan_marks: list = field(default_factory=list)  # positions of replan starts


def start_state_for(world: VoxelWorld, altitude: float = 2.0) -> State:
    """Map-center start at the given altitude, at rest."""
    c = world.center()
    return State(vec3(c[0], c[1], altitude), vec3(0.0, 0.0, 0.0))


def generate_tasks(
    world: VoxelWorld,
    n: int,
    seed: int,
    cfg: PlannerConfig,
    dfield: DistanceField | None = None,
) -> list[Task]:
    """Rejection-sample goals uniformly over the world volume.

    Goals are snapped to the even Level-1 sub-grid around the start so every
    per-axis 1D sub-problem from rest has matching cell parity and the goal
    is representable on the uniform lattice. A goal is accepted when its
    distance to the nearest obstacle or border covers both the validity
    clearance and the spatial resolution of the goal's level.
    """
    if dfield is None:
        dfield = build_distance_field(world)
    start = start_state_for(world)
    res = derive_resolutions(cfg)
    grid = make_grid(cfg, start.position)
    rng = np.random.default_rng(seed)
    lo, hi = world.bounds()
    zmin, zmax = world.altitude_range
    zlo, zhi = max(lo[2], zmin), min(hi[2], zmax)
    snap_step = 2.0 * res.dp_at(1)

    tasks = []
    for tid in range(n):
        for _attempt in range(10_000):
            raw = vec3(
                rng.uniform(lo[0], hi[0]),
                rng.uniform(lo[1], hi[1]),
                rng.uniform(zlo, zhi),
            )
            goal = snap_to_grid(raw, snap_step, start.position)
            level = grid.level_of(goal)
            margin = max(res.dp_at(level), cfg.clearance + dfield.margin)
            dist = float(dfield.lookup(goal.reshape(1, 3))[0])
            if dist >= margin:
                tasks.append(Task(id=tid, start=start, goal=goal, seed=seed))
                break
        else:
            raise TaskGenError(f"could not sample a valid goal for task {tid}")
    return tasks


def run_replanning_episode(
    task: Task,
    method: Method,
    cfg: PlannerConfig,
    world: VoxelWorld,
    table: Heuristic1DTable,
    dfield: DistanceField | None = None,
    reveals: dict | None = None,
    max_steps: int = 400,
    capture: bool = False,
) -> EpisodeMetrics:
    """Plan / advance one second / repeat, until the goal cell is reached.

    `reveals` maps replan step index -> list of Box to add to the world after
    that step (the dynamic-obstacle model). The episode fails as soon as any
    replanning search fails or the step budget runs out.
    """
    if dfield is None:
        dfield = build_distance_field(world)
    res = derive_resolutions(cfg)
    dp1 = res.dp_at(1)
    goal_state = State(task.goal, vec3(0.0, 0.0, 0.0))
    state = task.start
    m = EpisodeMetrics(False, 0, 0, 0.0, 0.0, "running")
    flown = []

    for step in range(max_steps):
        if capture:
            m.replan_marks.append(state.position.copy())
        result = plan(
            state, goal_state, method.mode, method.heuristic, method.scheme,
            cfg, dfield, table, trace=capture,
        )
        m.max_replanning_expansions = max(m.max_replanning_expansions, result.stats.expansions)
        m.max_replanning_time = max(m.max_replanning_time, result.stats.wall_time)
        if capture and result.stats.f_trace:
            m.f_values.extend(row[1] for row in result.stats.f_trace)
        if result.status is not SearchStatus.FOUND:
            m.status = result.status.value
            m.replan_steps = step + 1
            m.flown = tuple(flown)
            return m

        total = trajectory_duration(result.trajectory)
        m.replan_steps = step + 1
        if total <= cfg.replan_horizon + _TOL:
            state = trajectory_state_at(result.trajectory, state, total)
            m.cost += trajectory_cost(result.trajectory, cfg.rho)
            if capture:
                flown.extend(result.trajectory)
            reached = (np.all(np.abs(state.position - task.goal) <= 0.5 * dp1 + _TOL)
                       and np.all(np.abs(state.velocity) <= 1e-6))
            m.success = bool(reached)
            m.status = "found" if reached else "off-goal"
            m.flown = tuple(flown)
            return m

        m.cost += trajectory_cost_until(result.trajectory, cfg.replan_horizon, cfg.rho)
        if capture:
            flown.extend(_split_at(result.trajectory, cfg.replan_horizon))
        state = trajectory_state_at(result.trajectory, state, cfg.replan_horizon)
        if reveals and step in reveals:
            world = reveal_boxes(world, reveals[step])
            dfield = build_distance_field(world)

    m.status = "step-budget"
    m.flown = tuple(flown)
    return m


def _split_at(prims, horizon):
    """Prefix of a primitive chain covering exactly `horizon` seconds."""
    from .core import MotionPrimitive

    out = []
    acc = 0.0
    for prim in prims:
        if horizon >= acc + prim.duration - _TOL:
            out.append(prim)
            acc += prim.duration
        else:
            dt = horizon - acc
            if dt > _TOL:
                out.append(MotionPrimitive(prim.start, prim.accel, dt))
            break
    return out


CSV_HEADER = "method,task,success,steps,max_expansions,max_time_s,cost"


@dataclass
class EpisodeRow:
    method: str
    task: int
    success: bool
    steps: int
    max_expansions: int
    max_time_s: float
    cost: float

    def csv(self) -> str:
        cost = f"{self.cost:.9g}" if math.isfinite(self.cost) else "inf"
        return (f"{self.method},{self.task},{int(self.success)},{self.steps},"
                f"{self.max_expansions},{self.max_time_s:.6f},{cost}")


def run_suite(
    world: VoxelWorld,
    methods,
    n_tasks: int,
    seed: int,
    cfg: PlannerConfig,
    table: Heuristic1DTable | None = None,
    capture: bool = False,
    progress=None,
):
    """Run every method on every task; returns (episode_rows, agg_lines, captures).

    `captures` maps (method name, task id) -> EpisodeMetrics when capture is
    on (traces and flown trajectories for the report stage).
    """
    dfield = build_distance_field(world)
    if table is None:
        diag = float(np.linalg.norm(world.extent))
        table = load_or_build_table(cfg, diag)
    tasks = generate_tasks(world, n_tasks, seed, cfg, dfield)
    rows = []
    captures = {}
    for method in methods:
        for task in tasks:
            ep = run_replanning_episode(task, method, cfg, world, table, dfield, capture=capture)
            rows.append(EpisodeRow(
                method=method.name,
                task=task.id,
                success=ep.success,
                steps=ep.replan_steps,
                max_expansions=ep.max_replanning_expansions,
                max_time_s=ep.max_replanning_time,
                cost=ep.cost if ep.success else math.inf,
            ))
            if capture:
                captures[(method.name, task.id)] = ep
            if progress is not None:
                progress(method.name, task.id, ep)
    rows.sort(key=lambda r: (r.method, r.task))
    agg = aggregate_rows(rows, [m.name for m in methods])
    return rows, agg, captures


def _mean(vals):
    return sum(vals) / len(vals) if vals else math.nan


def _agg_line(method, scope, rows_for_method, solved_ids):
    sel = [r for r in rows_for_method if r.task in solved_ids]
    if sel:
        steps = f"{_mean([r.steps for r in sel]):.9g}"
        exps = f"{_mean([r.max_expansions for r in sel]):.9g}"
        times = f"{_mean([r.max_time_s for r in sel]):.6f}"
        costs = f"{_mean([r.cost for r in sel]):.9g}"
    else:
        steps = exps = times = costs = ""
    rate = _mean([1.0 if r.success else 0.0 for r in rows_for_method])
    return f"{method},{scope},{rate:.9g},{steps},{exps},{times},{costs}"


def aggregate_rows(rows, method_names) -> list[str]:
    """Aggregate CSV lines: all-methods intersection plus one-factor pairs."""
    by_method = {m: [r for r in rows if r.method == m] for m in method_names}
    solved = {m: {r.task for r in by_method[m] if r.success} for m in method_names}
    all_solved = set.intersection(*solved.values()) if method_names else set()
    lines = [_agg_line(m, "agg:all", by_method[m], all_solved) for m in method_names]
    for i, ma in enumerate(method_names):
        for mb in method_names[i + 1:]:
            if _differ_by_one(ma, mb):
                common = solved[ma] & solved[mb]
                lines.append(_agg_line(ma, f"agg:pair:{mb}", by_method[ma], common))
                lines.append(_agg_line(mb, f"agg:pair:{ma}", by_method[mb], common))
    return lines


def _differ_by_one(ma: str, mb: str) -> bool:
    pa, pb = ma.split(":"), mb.split(":")
    return sum(1 for a, b in zip(pa, pb) if a != b) == 1


def write_results_csv(path, rows, agg_lines) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(r.csv() + "\n")
        for line in agg_lines:
            fh.write(line + "\n")


def read_results_csv(path):
    """Returns (episode rows as dicts, aggregate lines)."""
    episodes = []
    agg = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected results header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if not parts or not parts[0]:
                continue
            if parts[1].startswith("agg:"):
                agg.append(line.strip())
                continue
            episodes.append({
                "method": parts[0],
                "task": int(parts[1]),
                "success": parts[2] == "1",
                "steps": int(parts[3]),
                "max_expansions": int(parts[4]),
                "max_time_s": float(parts[5]),
                "cost": float(parts[6]),
            })
    return episodes, agg
