"""Voxelized environment: obstacles, clearance field, validity, and file IO.

Obstacles are axis-aligned boxes rasterized onto a voxel grid. Validity is a
clearance test against a precomputed Euclidean distance field, with a
conservative half-cell-diagonal margin so the voxelized test never accepts a
position the continuous test would reject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import MotionPrimitive, PlannerConfig, State, Vec3, evaluate_primitive, vec3


class WorldFormatError(ValueError):
    """Malformed world file; message carries the offending line number."""


class WorldGenError(RuntimeError):
    """Procedural generation could not place the requested obstacles."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle, corners in meters."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        object.__setattr__(self, "lo", vec3(self.lo))
        object.__setattr__(self, "hi", vec3(self.hi))
        if np.any(self.hi <= self.lo):
            raise ValueError(f"degenerate box {self.lo} .. {self.hi}")

    def contains(self, p: Vec3) -> bool:
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def distance_to(self, p: Vec3) -> float:
        """Euclidean distance from a point to the box surface (0 inside)."""
        d = np.maximum(self.lo - p, 0.0) + np.maximum(p - self.hi, 0.0)
        return float(np.linalg.norm(d))


@dataclass(frozen=True)
class VoxelWorld:
    dims: tuple  # cells per axis
    cell_size: float
    origin: Vec3  # world coordinate of the (0,0,0) voxel corner
    boxes: tuple  # of Box
    altitude_range: tuple  # (z_min, z_max) in meters

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "altitude_range", (float(self.altitude_range[0]), float(self.altitude_range[1])))
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.altitude_range[0] >= self.altitude_range[1]:
            raise ValueError("altitude range must satisfy z_min < z_max")
        lo, hi = self.bounds()
        for b in self.boxes:
            if np.any(b.lo < lo - 1e-9) or np.any(b.hi > hi + 1e-9):
                raise ValueError(f"box {b.lo}..{b.hi} outside world bounds")

    def bounds(self):
        lo = self.origin
        hi = self.origin + np.array(self.dims, dtype=np.float64) * self.cell_size
        return lo, hi

    @property
    def extent(self) -> Vec3:
        return np.array(self.dims, dtype=np.float64) * self.cell_size

    def center(self) -> Vec3:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)

    def voxel_centers_axis(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.cell_size

    def occupancy(self) -> np.ndarray:
        """Boolean voxel grid; a voxel is occupied if its cube intersects a box."""
        occ = np.zeros(self.dims, dtype=bool)
        lo = self.origin
        for b in self.boxes:
            i0 = np.floor((b.lo - lo) / self.cell_size).astype(int)
            i1 = np.ceil((b.hi - lo) / self.cell_size).astype(int)
            i0 = np.clip(i0, 0, np.array(self.dims))
            i1 = np.clip(i1, 0, np.array(self.dims))
            occ[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] = True
        return occ


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel distance (m) to the nearest obstacle voxel or world/altitude bound."""

    world: VoxelWorld
    values: np.ndarray

    @property
    def margin(self) -> float:
        """Conservative slack: half the cell diagonal."""
        return 0.5 * math.sqrt(3.0) * self.world.cell_size

    def lookup(self, positions: np.ndarray) -> np.ndarray:
        """Nearest-voxel field values for an (N, 3) array; -inf outside bounds."""
        positions = np.atleast_2d(positions)
        w = self.world
        idx = np.floor((positions - w.origin) / w.cell_size).astype(np.int64)
        dims = np.array(w.dims)
        inb = np.all((idx >= 0) & (idx < dims), axis=1)
        zmin, zmax = w.altitude_range
        inb &= (positions[:, 2] >= zmin) & (positions[:, 2] <= zmax)
        out = np.full(len(positions), -np.inf)
        if np.any(inb):
            sel = idx[inb]
            out[inb] = self.values[sel[:, 0], sel[:, 1], sel[:, 2]]
        return out


def build_distance_field(world: VoxelWorld) -> DistanceField:
    """Exact Euclidean distance transform over voxel centers.

    Obstacle voxels get 0. Free voxels get the minimum of the center-to-center
    distance to the nearest obstacle voxel and the analytic distance to the
    world boundary planes (including the altitude limits).
    """
    occ = world.occupancy()
    if occ.any():
        dist = ndimage.distance_transform_edt(~occ, sampling=world.cell_size)
    else:
        dist = np.full(world.dims, np.inf)

    lo, hi = world.bounds()
    zmin, zmax = world.altitude_range
    zlo = max(lo[2], zmin)
    zhi = min(hi[2], zmax)
    cx = world.voxel_centers_axis(0)
    cy = world.voxel_centers_axis(1)
    cz = world.voxel_centers_axis(2)
    bx = np.minimum(cx - lo[0], hi[0] - cx)
    by = np.minimum(cy - lo[1], hi[1] - cy)
    bz = np.minimum(cz - zlo, zhi - cz)
    border = np.minimum(np.minimum(bx[:, None, None], by[None, :, None]), bz[None, None, :])
    values = np.minimum(dist, np.maximum(border, 0.0))
    values[occ] = 0.0
    return DistanceField(world=world, values=values)


def state_valid(p: Vec3, dfield: DistanceField, cfg: PlannerConfig) -> bool:
    """Position validity: in bounds, in the altitude band, and clear of obstacles."""
    vals = dfield.lookup(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return bool(vals[0] >= cfg.clearance + dfield.margin)


def positions_valid(points: np.ndarray, dfield: DistanceField, cfg: PlannerConfig) -> np.ndarray:
    """Vectorized state_valid over an (N, 3) array."""
    return dfield.lookup(points) >= cfg.clearance + dfield.margin


def sample_times(prim: MotionPrimitive, cell_size: float, n_override: int | None = None) -> np.ndarray:
    """Sample times so consecutive positions are at most cell_size/2 apart."""
    v0 = float(np.linalg.norm(prim.start.velocity))
    v1 = float(np.linalg.norm(prim.start.velocity + prim.duration * prim.accel))
    speed = max(v0, v1, 1e-9)  # |v(t)| is convex in t, max at an endpoint
    if n_override is None:
        n = max(1, int(math.ceil(prim.duration * speed / (0.5 * cell_size))))
    else:
        n = n_override
    return np.linspace(0.0, prim.duration, n + 1)


def primitive_collision_free(
    prim: MotionPrimitive,
    dfield: DistanceField,
    cfg: PlannerConfig,
    n_override: int | None = None,
) -> bool:
    """Check a primitive by dense sampling, including both endpoints.

    Also rejects primitives whose sampled velocity exceeds v_max on any axis
    or whose acceleration exceeds u_max.
    """
    tol = 1e-9
    if np.any(np.abs(prim.accel) > cfg.u_max + tol):
        return False
    ts = sample_times(prim, dfield.world.cell_size, n_override)
    p0, v0, u = prim.start.position, prim.start.velocity, prim.accel
    vel = v0[None, :] + ts[:, None] * u[None, :]
    if np.any(np.abs(vel) > cfg.v_max + tol):
        return False
    pos = p0[None, :] + ts[:, None] * v0[None, :] + 0.5 * (ts[:, None] ** 2) * u[None, :]
    return bool(np.all(positions_valid(pos, dfield, cfg)))


@dataclass(frozen=True)
class WorldGenParams:
    seed: int
    n_buildings: int
    size_range: tuple = (3.0, 10.0)  # footprint side, m
    height_range: tuple = (3.0, 10.0)
    world_size: tuple = (64.0, 64.0, 10.0)  # meters
    cell_size: float = 0.25
    protected_halfwidth: float = 4.0  # keep the start region free

    def __post_init__(self):
        if self.size_range[0] <= 0 or self.size_range[1] < self.size_range[0]:
            raise ValueError("bad size_range")
        if self.height_range[0] <= 0 or self.height_range[1] < self.height_range[0]:
            raise ValueError("bad height_range")
        if any(s <= 0 for s in self.world_size):
            raise ValueError("bad world_size")


def generate_world(params: WorldGenParams) -> VoxelWorld:
    """Deterministic procedural world: n axis-aligned buildings on flat ground.

    Boxes are rejected if their footprint would intersect the protected
    square around the map center, so the start state stays valid.
    """
    rng = np.random.default_rng(params.seed)
    wx, wy, wz = params.world_size
    dims = (
        int(round(wx / params.cell_size)),
        int(round(wy / params.cell_size)),
        int(round(wz / params.cell_size)),
    )
    origin = vec3(0.0, 0.0, 0.0)
    center = vec3(wx / 2.0, wy / 2.0, wz / 2.0)
    hw = params.protected_halfwidth
    boxes = []
    for _ in range(params.n_buildings):
        placed = False
        for _attempt in range(1000):
            sx = rng.uniform(*params.size_range)
            sy = rng.uniform(*params.size_range)
            h = min(rng.uniform(*params.height_range), wz)
            x0 = rng.uniform(0.0, max(wx - sx, 0.0))
            y0 = rng.uniform(0.0, max(wy - sy, 0.0))
            lo = vec3(x0, y0, 0.0)
            hi = vec3(x0 + sx, y0 + sy, h)
            if (lo[0] < center[0] + hw and hi[0] > center[0] - hw
                    and lo[1] < center[1] + hw and hi[1] > center[1] - hw):
                continue  # overlaps the protected start region
            boxes.append(Box(lo, hi))
            placed = True
            break
        if not placed:
            raise WorldGenError(
                f"could not place building {len(boxes) + 1}/{params.n_buildings} after 1000 tries"
            )
    return VoxelWorld(
        dims=dims,
        cell_size=params.cell_size,
        origin=origin,
        boxes=tuple(boxes),
        altitude_range=(0.0, wz),
    )


_MAGIC = "MRESWORLD 1"


def save_world(world: VoxelWorld, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"dims {world.dims[0]} {world.dims[1]} {world.dims[2]}\n")
        fh.write(f"cell {world.cell_size:.6f}\n")
        fh.write(f"origin {world.origin[0]:.6f} {world.origin[1]:.6f} {world.origin[2]:.6f}\n")
        fh.write(f"alt {world.altitude_range[0]:.6f} {world.altitude_range[1]:.6f}\n")
        for b in world.boxes:
            fh.write(
                "box "
                + " ".join(f"{v:.6f}" for v in (b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]))
                + "\n"
            )


def _parse_floats(parts, n, lineno, what):
    if len(parts) != n:
        raise WorldFormatError(f"line {lineno}: expected {n} values for {what}, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise WorldFormatError(f"line {lineno}: bad number in {what}") from exc


def load_world(path) -> VoxelWorld:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != _MAGIC:
        raise WorldFormatError(f"line 1: missing magic header {_MAGIC!r}")
    header = {}
    boxes = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "dims":
            if len(parts) != 4:
                raise WorldFormatError(f"line {lineno}: dims needs 3 integers")
            try:
                header["dims"] = tuple(int(p) for p in parts[1:])
            except ValueError as exc:
                raise WorldFormatError(f"line {lineno}: bad integer in dims") from exc
        elif tag == "cell":
            header["cell"] = _parse_floats(parts[1:], 1, lineno, "cell")[0]
        elif tag == "origin":
            header["origin"] = _parse_floats(parts[1:], 3, lineno, "origin")
        elif tag == "alt":
            header["alt"] = _parse_floats(parts[1:], 2, lineno, "alt")
        elif tag == "box":
            vals = _parse_floats(parts[1:], 6, lineno, "box")
            try:
                boxes.append(Box(vec3(vals[0], vals[1], vals[2]), vec3(vals[3], vals[4], vals[5])))
            except ValueError as exc:
                raise WorldFormatError(f"line {lineno}: {exc}") from exc
        else:
            raise WorldFormatError(f"line {lineno}: unknown record {tag!r}")
    missing = {"dims", "cell", "origin", "alt"} - set(header)
    if missing:
        raise WorldFormatError(f"missing header records: {sorted(missing)}")
    try:
        return VoxelWorld(
            dims=header["dims"],
            cell_size=header["cell"],
            origin=vec3(*header["origin"]),
            boxes=tuple(boxes),
            altitude_range=tuple(header["alt"]),
        )
    except ValueError as exc:
        raise WorldFormatError(str(exc)) from exc


def reveal_boxes(world: VoxelWorld, new_boxes) -> VoxelWorld:
    """World snapshot with additional obstacle boxes (dynamic-obstacle model)."""
    return VoxelWorld(
        dims=world.dims,
        cell_size=world.cell_size,
        origin=world.origin,
        boxes=tuple(world.boxes) + tuple(new_boxes),
        altitude_range=world.altitude_range,
    )
