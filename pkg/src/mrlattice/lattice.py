"""Multiresolution grid geometry and successor generation.

Three schemes share one pipeline: the uniform single-level baseline, fixed
per-level time steps with scaled commands, and variable time steps chosen
from the current velocity. Primitives crossing level boundaries are re-aimed
at a grid corner of the coarser of the start and end levels; snapping to the
coarser grid is what keeps every velocity change an exact multiple of the
Level-1 velocity spacing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    LatticeKey,
    LatticeMode,
    MotionPrimitive,
    PlannerConfig,
    Resolutions,
    State,
    Vec3,
    derive_resolutions,
    evaluate_primitive,
    primitive_cost,
    quantize_state,
    round_half_away,
    snap_to_grid,
    vec3,
)
from .heuristic import Heuristic1DTable
from .world import DistanceField, positions_valid, primitive_collision_free

_TOL = 1e-9

# Eq.-style command scaling per level for the fixed scheme: levels 2 and 3
# halve the Level-1 commands, level 4 quarters them.
_LEVEL_CMD_SCALE = (1.0, 0.5, 0.5, 0.25)


@dataclass(frozen=True)
class MultiresGrid:
    """Nested level regions centered on the replanning origin."""

    origin: Vec3
    res: Resolutions
    half_extents: np.ndarray  # meters per level, strictly increasing

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=np.float64))

    @property
    def num_levels(self) -> int:
        return len(self.half_extents)

    def level_of(self, p: Vec3) -> int:
        return int(self.level_of_many(np.asarray(p, dtype=np.float64).reshape(1, 3))[0])

    def level_of_many(self, points: np.ndarray) -> np.ndarray:
        """Smallest level whose region (Chebyshev cube) contains each point."""
        cheb = np.max(np.abs(points - self.origin), axis=1)
        lv = np.searchsorted(self.half_extents, cheb - _TOL, side="left") + 1
        return np.minimum(lv, self.num_levels)


def make_grid(cfg: PlannerConfig, origin: Vec3, res: Resolutions | None = None) -> MultiresGrid:
    """Grid anchored at the current MAV position; each level doubles the half-extent."""
    if res is None:
        res = derive_resolutions(cfg)
    he1 = cfg.level1_halfwidth_cells * res.dp_at(1)
    he = he1 * 2.0 ** np.arange(cfg.num_levels)
    return MultiresGrid(origin=vec3(origin), res=res, half_extents=he)


@dataclass(frozen=True)
class LatticeState:
    state: State
    level: int
    key: LatticeKey
    velocity_offgrid: bool = False


@dataclass(frozen=True)
class Successor:
    """A lattice edge: one primitive, or a Level-1 sequence for goal actions."""

    primitives: tuple  # of MotionPrimitive, in execution order
    end: LatticeState
    cost: float


def lattice_state(state: State, mode: LatticeMode, grid: MultiresGrid) -> LatticeState:
    """Wrap a raw state; uniform mode pins everything to Level 1."""
    level = 1 if mode is LatticeMode.UNIFORM else grid.level_of(state.position)
    key = quantize_state(state, level, grid.res, grid.origin)
    dv = grid.res.dv_at(level)
    off = bool(np.any(np.abs(state.velocity - snap_to_grid(state.velocity, dv)) > _TOL))
    return LatticeState(state=state, level=level, key=key, velocity_offgrid=off)


def adjust_primitive(start: State, duration: float, target_position: Vec3) -> Vec3:
    """Acceleration that lands the primitive exactly at target_position.

    The caller rejects the primitive if any component exceeds u_max.
    """
    tau = float(duration)
    return 2.0 * (np.asarray(target_position, dtype=np.float64)
                  - start.position - tau * start.velocity) / (tau * tau)


def variable_duration(v: float, u: float, level: int, res: Resolutions) -> float:
    """Smallest power-of-two multiple of tau1 moving at least one cell at this level.

    Uses >= against the level spacing so exact one-cell moves keep the short
    duration. Falls back to tau1 when the position barely changes for any k.
    """
    tau1 = res.tau_at(1)
    dp = res.dp_at(level)
    for k in range(7):
        tau = tau1 * 2.0**k
        if abs(tau * v + 0.5 * tau * tau * u) >= dp - _TOL:
            return tau
    return tau1


def _axis_commands_for(mode: LatticeMode, level: int, cfg: PlannerConfig) -> np.ndarray:
    base = cfg.axis_commands()
    if mode is LatticeMode.MRES_FIXED:
        return base * _LEVEL_CMD_SCALE[level - 1]
    return base


def special_action_commands(s: LatticeState, level: int, cfg: PlannerConfig,
                            res: Resolutions) -> list[np.ndarray]:
    """Fixed-scheme extra commands: stop, and accelerate along the flight direction.

    The acceleration target is the largest lattice-representable speed so the
    resulting velocity change stays on the Level-1 velocity grid.
    """
    tau = res.tau_at(level)
    v = s.state.velocity
    u_stop = np.clip(-v / tau, -cfg.u_max, cfg.u_max)
    v_top = math.floor(cfg.v_max / res.dv_at(1) + _TOL) * res.dv_at(1)
    target = np.sign(v) * v_top
    u_acc = np.clip((target - v) / tau, -cfg.u_max, cfg.u_max)
    return [u_stop, u_acc]


def _variable_taus(v: Vec3, cmds: np.ndarray, level: int, res: Resolutions) -> np.ndarray:
    """Per-candidate joint duration: max of the per-axis variable durations."""
    tau1 = res.tau_at(1)
    dp = res.dp_at(level)
    ks = tau1 * 2.0 ** np.arange(7)  # (7,)
    # displacement magnitude per candidate axis and k: (N, 3, 7)
    disp = np.abs(ks[None, None, :] * v[None, :, None]
                  + 0.5 * ks[None, None, :] ** 2 * cmds[:, :, None])
    ok = disp >= dp - _TOL
    first = np.where(ok.any(axis=2), ok.argmax(axis=2), 0)  # fallback k=0
    per_axis = ks[first]  # (N, 3)
    return per_axis.max(axis=1)


def successors(
    s: LatticeState,
    mode: LatticeMode,
    grid: MultiresGrid,
    cfg: PlannerConfig,
    dfield: DistanceField,
) -> list[Successor]:
    """Expand one lattice state into collision-free, limit-respecting edges.

    Endpoints in the multiresolution modes are snapped to the coarser of the
    start and end level grids and the primitive is re-derived to land there
    exactly; off-grid velocities are tolerated on the end states and
    retargeted when those states are themselves expanded. Successors are
    deduplicated by lattice key, keeping the cheapest edge.
    """
    res = grid.res
    level = s.level
    p = s.state.position
    v = s.state.velocity

    axis = _axis_commands_for(mode, level, cfg)
    cmds = np.array(list(itertools.product(axis, axis, axis)))
    if mode is LatticeMode.UNIFORM:
        taus = np.full(len(cmds), res.tau_at(1))
    elif mode is LatticeMode.MRES_FIXED:
        cmds = np.vstack([cmds] + special_action_commands(s, level, cfg, res))
        taus = np.full(len(cmds), res.tau_at(level))
    else:
        taus = _variable_taus(v, cmds, level, res)

    if s.velocity_offgrid:
        # Correct the velocity offset: aim for the nearest coarse-grid multiple
        # of the nominal end velocity. Position snapping below takes priority.
        dv = res.dv_at(level)
        v_nom = v[None, :] + taus[:, None] * cmds
        v_tgt = snap_to_grid(v_nom, dv)
        cmds = (v_tgt - v[None, :]) / taus[:, None]

    raw = p[None, :] + taus[:, None] * v[None, :] + 0.5 * (taus[:, None] ** 2) * cmds

    if mode is LatticeMode.UNIFORM:
        accel = cmds
        end_p = raw
        end_levels = np.ones(len(cmds), dtype=np.int64)
    else:
        snap_lv = np.maximum(level, grid.level_of_many(raw))
        for _ in range(grid.num_levels):
            spacing = res.dp[snap_lv - 1][:, None]
            end_p = grid.origin[None, :] + round_half_away((raw - grid.origin[None, :]) / spacing) * spacing
            lv2 = np.maximum(snap_lv, grid.level_of_many(end_p))
            if np.all(lv2 == snap_lv):
                break
            snap_lv = lv2
        accel = 2.0 * (end_p - p[None, :] - taus[:, None] * v[None, :]) / (taus[:, None] ** 2)
        end_levels = grid.level_of_many(end_p)

    end_v = v[None, :] + taus[:, None] * accel
    keep = np.all(np.abs(accel) <= cfg.u_max + _TOL, axis=1)
    keep &= np.all(np.abs(end_v) <= cfg.v_max + _TOL, axis=1)
    keep &= _edges_collision_free(p, v, accel, taus, dfield, cfg, keep)

    out: dict[LatticeKey, Successor] = {}
    for i in np.flatnonzero(keep):
        prim = MotionPrimitive(s.state, accel[i], float(taus[i]))
        end = evaluate_primitive(prim, prim.duration)
        lv = int(end_levels[i])
        key = quantize_state(end, lv, res, grid.origin)
        dv = res.dv_at(lv)
        off = bool(np.any(np.abs(end.velocity - snap_to_grid(end.velocity, dv)) > _TOL))
        cost = primitive_cost(accel[i], float(taus[i]), cfg.rho)
        prev = out.get(key)
        if prev is None or cost < prev.cost - _TOL:
            out[key] = Successor(
                primitives=(prim,),
                end=LatticeState(state=end, level=lv, key=key, velocity_offgrid=off),
                cost=cost,
            )
    return list(out.values())


def _edges_collision_free(p, v, accel, taus, dfield, cfg, mask) -> np.ndarray:
    """Batched sampling collision check for candidate edges where mask is set."""
    ok = mask.copy()
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return ok
    cell = dfield.world.cell_size
    v0n = float(np.linalg.norm(v))
    times = []
    owners = []
    for i in idx:
        v1n = float(np.linalg.norm(v + taus[i] * accel[i]))
        speed = max(v0n, v1n, 1e-9)
        n = max(1, int(math.ceil(taus[i] * speed / (0.5 * cell))))
        ts = np.linspace(0.0, taus[i], n + 1)
        times.append(ts)
        owners.append(np.full(n + 1, i))
    ts = np.concatenate(times)
    owner = np.concatenate(owners)
    pos = (p[None, :] + ts[:, None] * v[None, :]
           + 0.5 * (ts[:, None] ** 2) * accel[owner])
    valid = positions_valid(pos, dfield, cfg)
    bad_owner = np.unique(owner[~valid])
    ok[bad_owner] = False
    return ok


def special_actions(
    s: LatticeState,
    grid: MultiresGrid,
    cfg: PlannerConfig,
    dfield: DistanceField,
) -> list[Successor]:
    """The two fixed-scheme special actions as full successors (for inspection)."""
    res = grid.res
    out = []
    for u in special_action_commands(s, s.level, cfg, res):
        tau = res.tau_at(s.level)
        prim = MotionPrimitive(s.state, u, tau)
        if np.any(np.abs(u) > cfg.u_max + _TOL):
            continue
        end = evaluate_primitive(prim, tau)
        if np.any(np.abs(end.velocity) > cfg.v_max + _TOL):
            continue
        if not primitive_collision_free(prim, dfield, cfg):
            continue
        lv = grid.level_of(end.position)
        key = quantize_state(end, lv, res, grid.origin)
        off = bool(np.any(np.abs(end.velocity - snap_to_grid(end.velocity, res.dv_at(lv))) > _TOL))
        out.append(Successor(
            primitives=(prim,),
            end=LatticeState(end, lv, key, off),
            cost=primitive_cost(u, tau, cfg.rho),
        ))
    return out


def _replay(start: State, accels: np.ndarray, tau: float):
    """Chain constant-acceleration steps; returns (primitives, end_state)."""
    prims = []
    cur = start
    for row in accels:
        prim = MotionPrimitive(cur, row, tau)
        prims.append(prim)
        cur = evaluate_primitive(prim, tau)
    return prims, cur


def goal_actions(
    s: LatticeState,
    goal: Vec3,
    table: Heuristic1DTable,
    grid: MultiresGrid,
    cfg: PlannerConfig,
    dfield: DistanceField,
) -> Successor | None:
    """Direct connection to the zero-velocity goal, if reachable in one horizon.

    Looks up per-axis optimal Level-1 sequences and combines them step-wise,
    padding finished axes with zero acceleration. When the start state sits
    fractionally off the Level-1 grid (mid-primitive replanning starts), the
    last two steps are re-solved in closed form so the sequence still ends
    exactly at the goal; the same mechanism covers parity-unreachable exact
    cells by borrowing a neighboring cell's sequence.
    """
    goal = np.asarray(goal, dtype=np.float64)
    level = s.level
    n_max = 2 ** (level - 1)
    horizon = n_max * cfg.tau1
    p = s.state.position
    v = s.state.velocity

    lo = p + horizon * v - 0.5 * horizon * horizon * cfg.u_max
    hi = p + horizon * v + 0.5 * horizon * horizon * cfg.u_max
    if np.any(goal < lo - _TOL) or np.any(goal > hi + _TOL):
        return None

    d = goal - p
    goal_state = State(goal, vec3(0.0, 0.0, 0.0))
    if np.all(np.abs(d) <= _TOL) and np.all(np.abs(v) <= _TOL):
        key = quantize_state(goal_state, 1, grid.res, grid.origin)
        return Successor((), LatticeState(goal_state, 1, key, False), 0.0)

    dc = round_half_away(d / table.dp1).astype(np.int64)
    vc = round_half_away(v / table.dv1).astype(np.int64)
    if np.any(np.abs(vc) > table.v_cells):
        return None

    seqs = []
    for a in range(3):
        if not table.in_range(int(dc[a]), int(vc[a])):
            return None
        sgn = 1 if dc[a] >= 0 else -1
        chosen = None
        for cand in (int(dc[a]), int(dc[a]) - sgn, int(dc[a]) + sgn):
            if not table.in_range(cand, int(vc[a])):
                continue
            steps = table.steps(cand, int(vc[a]))
            if 0 <= steps <= n_max:
                chosen = table.sequence(cand, int(vc[a]))
                break
        if chosen is None:
            return None
        seqs.append(chosen)

    n = max(len(q) for q in seqs)
    accels = np.zeros((n, 3))
    for a, q in enumerate(seqs):
        for k, (u, _tau) in enumerate(q):
            accels[k, a] = u

    _, end = _replay(s.state, accels, cfg.tau1)
    exact = (np.all(np.abs(end.position - goal) <= _TOL)
             and np.all(np.abs(end.velocity) <= _TOL))
    if not exact:
        n2 = max(n, 2)
        if n2 > n_max:
            return None
        if n2 > n:
            accels = np.vstack([accels, np.zeros((n2 - n, 3))])
        _, mid = _replay(s.state, accels[:-2], cfg.tau1)
        tau = cfg.tau1
        p2, v2 = mid.position, mid.velocity
        dd = goal - p2 - 2.0 * tau * v2
        u_a = (dd + 0.5 * tau * v2) / (tau * tau)
        u_b = -v2 / tau - u_a
        if np.any(np.abs(u_a) > cfg.u_max + _TOL) or np.any(np.abs(u_b) > cfg.u_max + _TOL):
            return None
        v_mid = v2 + tau * u_a
        if np.any(np.abs(v_mid) > cfg.v_max + _TOL) or np.any(np.abs(v2) > cfg.v_max + _TOL):
            return None
        accels[-2] = u_a
        accels[-1] = u_b

    prims, end = _replay(s.state, accels, cfg.tau1)
    if not (np.all(np.abs(end.position - goal) <= 1e-6)
            and np.all(np.abs(end.velocity) <= 1e-6)):
        return None
    for prim in prims:
        if not primitive_collision_free(prim, dfield, cfg):
            return None
    cost = sum(primitive_cost(prim.accel, prim.duration, cfg.rho) for prim in prims)
    key = quantize_state(goal_state, 1, grid.res, grid.origin)
    return Successor(tuple(prims), LatticeState(goal_state, 1, key, False), float(cost))
