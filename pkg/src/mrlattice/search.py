"""A* and the level-based expansion scheme over lattice successors.

Classic A* terminates on goal expansion and, with a consistent heuristic,
returns optimal trajectories; it re-opens closed states on a strictly better
g, which keeps costs near-optimal under the inconsistent 1D heuristic. The
level-based scheme keeps one queue per resolution level, expands the
lowest-h state among queue tops within one step cost of the global minimum
f, and stops as soon as the goal is pushed.
"""

from __future__ import annotations

import enum
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    LatticeMode,
    MotionPrimitive,
    PlannerConfig,
    State,
    Vec3,
    evaluate_primitive,
    primitive_cost,
    snap_to_grid,
    vec3,
)
from .heuristic import Heuristic1DTable, h_1d, h_time_bound
from .lattice import (
    LatticeState,
    MultiresGrid,
    Successor,
    goal_actions,
    lattice_state,
    make_grid,
    successors,
)
from .world import DistanceField, state_valid

_GOAL_KEY = ("goal",)
_TOL = 1e-9


class PlanningInputError(ValueError):
    """Invalid start or goal handed to a search."""


class SearchStatus(enum.Enum):
    FOUND = "found"
    EXPANSION_LIMIT = "expansion-limit"
    EXHAUSTED = "exhausted"


@dataclass
class SearchStats:
    expansions: int = 0
    pushes: int = 0
    wall_time: float = 0.0
    f_trace: list | None = None  # rows (expansion_index, f, g, h, level)


@dataclass(frozen=True)
class SearchResult:
    status: SearchStatus
    trajectory: tuple  # of MotionPrimitive
    cost: float
    stats: SearchStats

    @property
    def found(self) -> bool:
        return self.status is SearchStatus.FOUND


@dataclass
class _Node:
    g: float
    lattice: LatticeState
    parent: tuple | None  # parent key
    edge: Successor | None


def make_heuristic(name: str, goal_position: Vec3, table: Heuristic1DTable | None,
                   cfg: PlannerConfig):
    """Heuristic callable State -> float for a fixed goal position."""
    goal_position = vec3(goal_position)
    if name == "h1d":
        if table is None:
            raise PlanningInputError("h1d heuristic requires a precomputed 1D table")
        return lambda s: h_1d(s, goal_position, table, cfg)
    if name == "htime":
        return lambda s: h_time_bound(s, goal_position, cfg)
    if name == "zero":
        return lambda s: 0.0
    raise PlanningInputError(f"unknown heuristic {name!r}")


def _snap_goal(goal: State, grid: MultiresGrid) -> Vec3:
    """Pin the requested goal to the Level-1 position grid of this search."""
    return snap_to_grid(goal.position, grid.res.dp_at(1), grid.origin)


def _check_start(start: State, dfield: DistanceField, cfg: PlannerConfig) -> None:
    if np.any(np.abs(start.velocity) > cfg.v_max + _TOL):
        raise PlanningInputError(f"start velocity {start.velocity} exceeds v_max")
    if not state_valid(start.position, dfield, cfg):
        raise PlanningInputError(f"start position {start.position} is invalid")


def _is_goal(state: State, goal_p: Vec3) -> bool:
    return bool(np.all(np.abs(state.position - goal_p) <= 1e-6)
                and np.all(np.abs(state.velocity) <= 1e-6))


def reconstruct_trajectory(nodes: dict, goal_key, start: State) -> tuple:
    """Parent-edge walk, reversed, with a replay soundness check."""
    edges = []
    key = goal_key
    while True:
        node = nodes.get(key)
        if node is None:
            raise RuntimeError("broken parent chain during reconstruction")
        if node.parent is None:
            break
        edges.append(node.edge)
        key = node.parent
    edges.reverse()
    prims = tuple(p for e in edges for p in e.primitives)
    cur = start
    for prim in prims:
        if not prim.start.close_to(cur, 1e-6):
            raise RuntimeError("trajectory replay mismatch at a primitive boundary")
        cur = evaluate_primitive(prim, prim.duration)
    goal_state = nodes[goal_key].lattice.state
    if not cur.close_to(goal_state, 1e-6):
        raise RuntimeError("trajectory replay does not reach the goal state")
    return prims


def _expand(lat: LatticeState, goal_p: Vec3, mode, grid, cfg, dfield, table):
    edges = successors(lat, mode, grid, cfg, dfield)
    ga = goal_actions(lat, goal_p, table, grid, cfg, dfield)
    if ga is not None:
        edges.append(ga)
    return edges


def astar(
    start: State,
    goal: State,
    mode: LatticeMode,
    heuristic,
    grid: MultiresGrid,
    cfg: PlannerConfig,
    dfield: DistanceField,
    table: Heuristic1DTable,
    trace: bool = False,
) -> SearchResult:
    """Classic A* over the lattice; terminates when the goal is expanded."""
    t0 = time.perf_counter()
    _check_start(start, dfield, cfg)
    if np.any(np.abs(goal.velocity) > _TOL):
        raise PlanningInputError("goal velocity must be zero")
    goal_p = _snap_goal(goal, grid)
    stats = SearchStats(f_trace=[] if trace else None)

    s0 = lattice_state(start, mode, grid)
    start_key = _GOAL_KEY if _is_goal(start, goal_p) else s0.key
    nodes = {start_key: _Node(0.0, s0, None, None)}
    h0 = heuristic(start)
    heap = [(h0, 0.0, 0, start_key)]
    stats.pushes += 1
    counter = 1

    while heap:
        f, neg_g, _, key = heapq.heappop(heap)
        g = -neg_g
        node = nodes.get(key)
        if node is None or node.g < g - 1e-12:
            continue  # stale entry
        stats.expansions += 1
        if stats.f_trace is not None:
            stats.f_trace.append((stats.expansions - 1, f, g, f - g, node.lattice.level))
        if key == _GOAL_KEY:
            prims = reconstruct_trajectory(nodes, key, start)
            stats.wall_time = time.perf_counter() - t0
            return SearchResult(SearchStatus.FOUND, prims, g, stats)
        if stats.expansions >= cfg.expansion_limit:
            stats.wall_time = time.perf_counter() - t0
            return SearchResult(SearchStatus.EXPANSION_LIMIT, (), math.inf, stats)

        for succ in _expand(node.lattice, goal_p, mode, grid, cfg, dfield, table):
            ng = g + succ.cost
            k2 = _GOAL_KEY if _is_goal(succ.end.state, goal_p) else succ.end.key
            known = nodes.get(k2)
            if known is not None and known.g <= ng + 1e-12:
                continue
            hv = 0.0 if k2 == _GOAL_KEY else heuristic(succ.end.state)
            if not math.isfinite(hv):
                continue
            nodes[k2] = _Node(ng, succ.end, key, succ)
            heapq.heappush(heap, (ng + hv, -ng, counter, k2))
            counter += 1
            stats.pushes += 1

    stats.wall_time = time.perf_counter() - t0
    return SearchResult(SearchStatus.EXHAUSTED, (), math.inf, stats)


def level_astar(
    start: State,
    goal: State,
    mode: LatticeMode,
    heuristic,
    grid: MultiresGrid,
    cfg: PlannerConfig,
    dfield: DistanceField,
    table: Heuristic1DTable,
    trace: bool = False,
) -> SearchResult:
    """Level-based expansion scheme with early stop on goal insertion."""
    t0 = time.perf_counter()
    _check_start(start, dfield, cfg)
    if np.any(np.abs(goal.velocity) > _TOL):
        raise PlanningInputError("goal velocity must be zero")
    goal_p = _snap_goal(goal, grid)
    stats = SearchStats(f_trace=[] if trace else None)
    res = grid.res
    num_levels = res.num_levels
    step_cost = [cfg.rho * res.tau_at(lv) for lv in range(1, num_levels + 1)]

    s0 = lattice_state(start, mode, grid)
    start_key = _GOAL_KEY if _is_goal(start, goal_p) else s0.key
    nodes = {start_key: _Node(0.0, s0, None, None)}
    queues = [[] for _ in range(num_levels)]
    h0 = heuristic(start)
    heapq.heappush(queues[s0.level - 1], (h0, 0.0, 0, start_key, h0))
    stats.pushes += 1
    counter = 1

    def finish(status, prims=(), cost=math.inf):
        stats.wall_time = time.perf_counter() - t0
        return SearchResult(status, prims, cost, stats)

    while True:
        tops = []
        for qi, q in enumerate(queues):
            while q:
                f, neg_g, _, key, hv = q[0]
                node = nodes.get(key)
                if node is None or node.g < -neg_g - 1e-12:
                    heapq.heappop(q)
                    continue
                tops.append((qi, f, hv, -neg_g, key))
                break
        if not tops:
            return finish(SearchStatus.EXHAUSTED)

        f_min = min(t[1] for t in tops)
        cands = [t for t in tops if t[1] - f_min <= step_cost[t[0]] + _TOL]
        # lowest heuristic wins; ties to the finer level, then the larger g
        cands.sort(key=lambda t: (t[2], t[0], -t[3]))
        qi, f, hv, g, key = cands[0]
        heapq.heappop(queues[qi])
        node = nodes[key]
        stats.expansions += 1
        if stats.f_trace is not None:
            stats.f_trace.append((stats.expansions - 1, f, g, hv, node.lattice.level))
        if key == _GOAL_KEY:
            prims = reconstruct_trajectory(nodes, key, start)
            return finish(SearchStatus.FOUND, prims, g)
        if stats.expansions >= cfg.expansion_limit:
            return finish(SearchStatus.EXPANSION_LIMIT)

        for succ in _expand(node.lattice, goal_p, mode, grid, cfg, dfield, table):
            ng = g + succ.cost
            is_goal = _is_goal(succ.end.state, goal_p)
            k2 = _GOAL_KEY if is_goal else succ.end.key
            known = nodes.get(k2)
            if known is not None and known.g <= ng + 1e-12:
                continue
            nodes[k2] = _Node(ng, succ.end, key, succ)
            if is_goal:
                # early stop: the goal just entered the open list
                prims = reconstruct_trajectory(nodes, k2, start)
                return finish(SearchStatus.FOUND, prims, ng)
            hv2 = heuristic(succ.end.state)
            if not math.isfinite(hv2):
                continue
            heapq.heappush(queues[succ.end.level - 1], (ng + hv2, -ng, counter, k2, hv2))
            counter += 1
            stats.pushes += 1


def plan(
    start: State,
    goal: State,
    mode: LatticeMode,
    heuristic_name: str,
    scheme: str,
    cfg: PlannerConfig,
    dfield: DistanceField,
    table: Heuristic1DTable,
    trace: bool = False,
) -> SearchResult:
    """One search with the grid recentered on the start position."""
    grid = make_grid(cfg, start.position)
    heuristic = make_heuristic(heuristic_name, _snap_goal(goal, grid), table, cfg)
    if scheme == "astar":
        return astar(start, goal, mode, heuristic, grid, cfg, dfield, table, trace)
    if scheme == "level":
        return level_astar(start, goal, mode, heuristic, grid, cfg, dfield, table, trace)
    raise PlanningInputError(f"unknown scheme {scheme!r}")


def write_trace(stats: SearchStats, path) -> None:
    """One CSV line per expansion: expansion_index,f,g,h,level."""
    if stats.f_trace is None:
        raise ValueError("search was run without trace capture")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("expansion_index,f,g,h,level\n")
        for idx, f, g, h, level in stats.f_trace:
            fh.write(f"{idx},{f:.9g},{g:.9g},{h:.9g},{level}\n")


def trajectory_duration(prims) -> float:
    return float(sum(p.duration for p in prims))


def trajectory_cost(prims, rho: float) -> float:
    return float(sum(primitive_cost(p.accel, p.duration, rho) for p in prims))


def trajectory_state_at(prims, start: State, t: float) -> State:
    """State reached t seconds into a primitive chain (clamped to the end)."""
    if t <= 0 or not prims:
        return start if not prims else prims[0].start
    acc = 0.0
    for prim in prims:
        if t <= acc + prim.duration + _TOL:
            return evaluate_primitive(prim, min(t - acc, prim.duration))
        acc += prim.duration
    return evaluate_primitive(prims[-1], prims[-1].duration)


def trajectory_cost_until(prims, t: float, rho: float) -> float:
    """Cost accrued over the first t seconds (partial primitives pro-rated)."""
    acc = 0.0
    cost = 0.0
    for prim in prims:
        if t >= acc + prim.duration - _TOL:
            cost += primitive_cost(prim.accel, prim.duration, rho)
            acc += prim.duration
        else:
            dt = max(t - acc, 0.0)
            if dt > 0:
                cost += primitive_cost(prim.accel, dt, rho)
            break
    return cost


def sample_trajectory(prims, start: State, dt: float) -> np.ndarray:
    """Positions sampled every dt seconds, endpoints included: (N, 3)."""
    total = trajectory_duration(prims)
    if not prims:
        return start.position.reshape(1, 3)
    n = max(1, int(math.ceil(total / dt)))
    ts = np.linspace(0.0, total, n + 1)
    return np.array([trajectory_state_at(prims, start, t).position for t in ts])
