"""Precomputed 1D optimal-cost table and the heuristics built on it.

The table solves, once per configuration, the family of 1D problems "reach
the origin with zero velocity from signed distance d and velocity v" over the
Level-1 lattice (commands applied for tau1 each). Costs decompose into a time
term and a per-axis control-effort term, which is what lets the 3D heuristic
combine per-axis lookups admissibly.

A parity fact about this lattice is worth stating up front: one step changes
the distance cell count by (2*v_cells + m) and the velocity cell count by m,
so (d_cells - v_cells) mod 2 is invariant. Cells with the wrong parity
relative to (0, 0) are genuinely unreachable and carry infinite cost.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import PlannerConfig, State, Vec3, derive_resolutions, round_half_away


class TableRangeError(LookupError):
    """Queried distance outside the precomputed table range."""


class TableBuildError(RuntimeError):
    """Requested table exceeds the size cap."""


NO_ACTION = np.iinfo(np.int8).min  # sentinel in the action array


@dataclass(frozen=True)
class Heuristic1DEntry:
    cost: float
    time: float
    effort: float
    sequence: tuple  # of (accel, duration) pairs


class Heuristic1DTable:
    """Optimal 1D costs/times/sequences indexed by (distance cells, velocity cells).

    Arrays are indexed [d + d_cells, v + v_cells]. `action` stores the first
    command index (offset by the command-set radius) of an optimal sequence;
    full sequences are reconstructed by walking the actions to (0, 0).
    """

    def __init__(self, cfg: PlannerConfig, max_distance: float, d_cells: int,
                 cost: np.ndarray, time: np.ndarray, effort: np.ndarray, action: np.ndarray):
        self.cfg = cfg
        self.max_distance = float(max_distance)
        self.d_cells = int(d_cells)
        res = derive_resolutions(cfg)
        self.dp1 = res.dp_at(1)
        self.dv1 = res.dv_at(1)
        self.v_cells = int(math.floor(cfg.v_max / self.dv1 + 1e-9))
        self.cost = cost
        self.time = time
        self.effort = effort
        self.action = action
        self._m = int(round(cfg.u_max / cfg.du))

    def in_range(self, d_cells: int, v_cells: int) -> bool:
        return abs(d_cells) <= self.d_cells and abs(v_cells) <= self.v_cells

    def _idx(self, d_cells: int, v_cells: int):
        if abs(v_cells) > self.v_cells:
            raise TableRangeError(f"velocity {v_cells} cells exceeds table range {self.v_cells}")
        if abs(d_cells) > self.d_cells:
            raise TableRangeError(
                f"distance {d_cells} cells exceeds table range {self.d_cells} "
                f"(max_distance {self.max_distance} m)"
            )
        return d_cells + self.d_cells, v_cells + self.v_cells

    def entry(self, d_cells: int, v_cells: int) -> Heuristic1DEntry:
        i, j = self._idx(d_cells, v_cells)
        return Heuristic1DEntry(
            cost=float(self.cost[i, j]),
            time=float(self.time[i, j]),
            effort=float(self.effort[i, j]),
            sequence=self.sequence(d_cells, v_cells),
        )

    def cost_at(self, d_cells: int, v_cells: int) -> float:
        i, j = self._idx(d_cells, v_cells)
        return float(self.cost[i, j])

    def time_effort(self, d_cells: int, v_cells: int):
        i, j = self._idx(d_cells, v_cells)
        return float(self.time[i, j]), float(self.effort[i, j])

    def steps(self, d_cells: int, v_cells: int) -> int:
        """Length of the optimal sequence, or -1 if unreachable."""
        i, j = self._idx(d_cells, v_cells)
        t = self.time[i, j]
        if not np.isfinite(t):
            return -1
        return int(round(t / self.cfg.tau1))

    def sequence(self, d_cells: int, v_cells: int) -> tuple:
        """Optimal action sequence as (accel, tau1) pairs; empty at (0, 0)."""
        i, j = self._idx(d_cells, v_cells)
        if not np.isfinite(self.cost[i, j]):
            return ()
        seq = []
        d, v = d_cells, v_cells
        guard = 4 * (2 * self.d_cells + 1)
        while (d, v) != (0, 0):
            i, j = d + self.d_cells, v + self.v_cells
            a = int(self.action[i, j])
            if a == NO_ACTION:
                raise RuntimeError(f"broken action chain at ({d}, {v})")
            m = a - self._m
            seq.append((m * self.cfg.du, self.cfg.tau1))
            d = d - (2 * v + m)
            v = v + m
            guard -= 1
            if guard < 0:
                raise RuntimeError("action chain does not terminate")
        return tuple(seq)

    def fingerprint(self) -> str:
        return table_fingerprint(self.cfg, self.max_distance)


def table_fingerprint(cfg: PlannerConfig, max_distance: float) -> str:
    """Cache key over everything the table contents depend on."""
    cmds = ",".join(f"{c:.9g}" for c in cfg.axis_commands())
    text = f"rho={cfg.rho:.9g};tau1={cfg.tau1:.9g};vmax={cfg.v_max:.9g};cmds={cmds};maxd={max_distance:.9g}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_1d_table(cfg: PlannerConfig, max_distance: float,
                   max_cells: int = 2_000_000) -> Heuristic1DTable:
    """Dijkstra from the goal cell (0, 0) over the reversed 1D lattice.

    The stored range is padded beyond max_distance by the worst-case
    overshoot (braking from v_max at the minimal command) so entries inside
    the requested range are exact even when the optimal trajectory briefly
    leaves it.
    """
    res = derive_resolutions(cfg)
    dp1, dv1 = res.dp_at(1), res.dv_at(1)
    v_cells = int(math.floor(cfg.v_max / dv1 + 1e-9))
    d_req = int(math.ceil(max_distance / dp1 - 1e-9))
    pad = int(math.ceil(cfg.v_max**2 / (2.0 * cfg.u_min) / dp1)) + 2 * v_cells + 2
    d_cells = d_req + pad
    nd, nv = 2 * d_cells + 1, 2 * v_cells + 1
    if nd * nv > max_cells:
        raise TableBuildError(f"table of {nd}x{nv} cells exceeds cap {max_cells}")

    m_max = int(round(cfg.u_max / cfg.du))
    cost = np.full((nd, nv), np.inf)
    time = np.full((nd, nv), np.inf)
    effort = np.full((nd, nv), np.inf)
    action = np.full((nd, nv), NO_ACTION, dtype=np.int8)

    step_costs = {}
    for m in range(-m_max, m_max + 1):
        u = m * cfg.du
        step_costs[m] = u * u * cfg.tau1 + cfg.rho * cfg.tau1

    gi, gj = d_cells, v_cells
    cost[gi, gj] = 0.0
    time[gi, gj] = 0.0
    effort[gi, gj] = 0.0
    heap = [(0.0, 0, 0)]
    while heap:
        c, d, v = heapq.heappop(heap)
        i, j = d + d_cells, v + v_cells
        if c > cost[i, j] + 1e-12:
            continue
        # Predecessors: states one forward step before (d, v).
        for m in range(-m_max, m_max + 1):
            vp = v - m
            if abs(vp) > v_cells:
                continue
            dp = d + 2 * vp + m
            if abs(dp) > d_cells:
                continue
            nc = c + step_costs[m]
            ip, jp = dp + d_cells, vp + v_cells
            if nc < cost[ip, jp] - 1e-12:
                cost[ip, jp] = nc
                time[ip, jp] = time[i, j] + cfg.tau1
                effort[ip, jp] = effort[i, j] + (m * cfg.du) ** 2 * cfg.tau1
                action[ip, jp] = m + m_max
                heapq.heappush(heap, (nc, dp, vp))

    return Heuristic1DTable(cfg, max_distance, d_cells, cost, time, effort, action)


def save_table(table: Heuristic1DTable, path) -> None:
    np.savez_compressed(
        path,
        fingerprint=np.frombuffer(table.fingerprint().encode(), dtype=np.uint8),
        max_distance=np.array([table.max_distance]),
        d_cells=np.array([table.d_cells]),
        cost=table.cost,
        time=table.time,
        effort=table.effort,
        action=table.action,
    )


def load_table(path, cfg: PlannerConfig, max_distance: float) -> Heuristic1DTable | None:
    """Load a cached table if its fingerprint matches, else None."""
    try:
        data = np.load(path)
    except (OSError, ValueError):
        return None
    stored = bytes(data["fingerprint"]).decode()
    if stored != table_fingerprint(cfg, max_distance):
        return None
    return Heuristic1DTable(
        cfg,
        float(data["max_distance"][0]),
        int(data["d_cells"][0]),
        data["cost"],
        data["time"],
        data["effort"],
        data["action"],
    )


def load_or_build_table(cfg: PlannerConfig, max_distance: float, cache_path=None) -> Heuristic1DTable:
    if cache_path is not None:
        cached = load_table(cache_path, cfg, max_distance)
        if cached is not None:
            return cached
    table = build_1d_table(cfg, max_distance)
    if cache_path is not None:
        save_table(table, cache_path)
    return table


def axis_control_bound(distance: float, velocity: float, cfg: PlannerConfig) -> float:
    """Lower bound on one axis's control effort when it is not the slowest axis.

    Flying toward the goal only the stop effort is unavoidable; from rest a
    minimal out-and-back bump is; flying away both are.
    """
    tol = 1e-9
    if abs(distance) <= tol and abs(velocity) <= tol:
        return 0.0
    stop = abs(velocity) * cfg.u_max  # |v|/(u_max*tau1) steps at u_max, effort u_max^2*tau1 each
    bump = 2.0 * cfg.u_min**2 * cfg.tau1
    if abs(velocity) <= tol:
        return bump
    if velocity * math.copysign(1.0, distance) > 0.0:
        return stop
    return stop + bump


def _axis_lookup(table: Heuristic1DTable, d_cells: int, v_cells: int):
    """(time, effort) for an axis cell, falling back to the cheapest finite
    neighboring distance cell when the exact cell is parity-unreachable."""
    t, c = table.time_effort(d_cells, v_cells)
    if math.isfinite(t):
        return t, c
    best = (math.inf, math.inf)
    for dd in (-1, 1):
        if table.in_range(d_cells + dd, v_cells):
            tn, cn = table.time_effort(d_cells + dd, v_cells)
            if math.isfinite(tn) and table.cfg.rho * tn + cn < table.cfg.rho * best[0] + best[1]:
                best = (tn, cn)
    return best


def h_1d(s: State, goal: Vec3, table: Heuristic1DTable, cfg: PlannerConfig) -> float:
    """Admissible 3D cost-to-go from per-axis 1D table lookups.

    The time term is paid once, for the slowest axis; the other axes
    contribute only their unavoidable control effort. Admissible but not
    consistent: the slowest axis can change across an edge.
    """
    d = np.asarray(goal, dtype=np.float64) - s.position
    v = s.velocity
    if np.all(np.abs(d) <= 1e-9) and np.all(np.abs(v) <= 1e-9):
        return 0.0
    dc = round_half_away(d / table.dp1).astype(np.int64)
    vc = round_half_away(v / table.dv1).astype(np.int64)
    vc = np.clip(vc, -table.v_cells, table.v_cells)
    times = np.empty(3)
    efforts = np.empty(3)
    for a in range(3):
        times[a], efforts[a] = _axis_lookup(table, int(dc[a]), int(vc[a]))
    if not np.all(np.isfinite(times)):
        return math.inf
    imax = int(np.argmax(times))  # ties resolve to the lowest axis index
    h = cfg.rho * times[imax] + efforts[imax]
    for a in range(3):
        if a != imax:
            h += axis_control_bound(float(d[a]), float(v[a]), cfg)
    return float(h)


def _axis_min_time(d: float, v: float, u_max: float, v_max: float) -> float:
    """Continuous-time minimum to cover a signed distance from velocity v.

    Bang toward the goal at u_max, clipped at v_max; arrival velocity is
    unconstrained, which keeps the bound admissible and consistent.
    """
    if d < 0:
        d, v = -d, -v
    if d <= 1e-12:
        return 0.0
    # accelerate at u_max; check whether v_max is hit before covering d
    disc = v * v + 2.0 * u_max * d
    t_free = (-v + math.sqrt(disc)) / u_max
    if v + u_max * t_free <= v_max + 1e-12:
        return t_free
    t_acc = (v_max - v) / u_max
    d_acc = v * t_acc + 0.5 * u_max * t_acc * t_acc
    return t_acc + (d - d_acc) / v_max


def h_time_bound(s: State, goal: Vec3, cfg: PlannerConfig) -> float:
    """Baseline heuristic: rho times the slowest axis's minimal travel time."""
    d = np.asarray(goal, dtype=np.float64) - s.position
    t = max(_axis_min_time(float(d[a]), float(s.velocity[a]), cfg.u_max, cfg.v_max) for a in range(3))
    return cfg.rho * t


def h_zero(s: State, goal: Vec3, cfg: PlannerConfig) -> float:
    return 0.0
