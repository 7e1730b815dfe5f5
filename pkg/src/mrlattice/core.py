"""Second-order primitive dynamics, cost model, resolutions, and quantization.

Everything here is shared by the lattice, heuristic, search, and bench
layers. All types are immutable values after construction and safe to share
across concurrent searches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

Vec3 = np.ndarray  # shape (3,), float64

MAX_LEVELS = 4


class ConfigError(ValueError):
    """Raised for invalid planner configurations or config files."""


def vec3(x, y=None, z=None) -> Vec3:
    """Build a float64 3-vector from components or any length-3 sequence."""
    if y is None:
        a = np.asarray(x, dtype=np.float64)
        if a.shape != (3,):
            raise ValueError(f"expected 3 components, got shape {a.shape}")
        return a.copy()
    return np.array([x, y, z], dtype=np.float64)


def round_half_away(x):
    """Round to nearest integer, ties away from zero. Works elementwise."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class State:
    """Position + velocity pair, the lattice vertex payload."""

    position: Vec3
    velocity: Vec3

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "velocity", vec3(self.velocity))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("state components must be finite")

    def close_to(self, other: "State", tol: float = 1e-9) -> bool:
        return bool(
            np.all(np.abs(self.position - other.position) <= tol)
            and np.all(np.abs(self.velocity - other.velocity) <= tol)
        )


@dataclass(frozen=True)
class MotionPrimitive:
    """Constant-acceleration segment: a lattice edge with closed-form dynamics."""

    start: State
    accel: Vec3
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "accel", vec3(self.accel))
        object.__setattr__(self, "duration", float(self.duration))
        if not self.duration > 0.0:
            raise ValueError(f"primitive duration must be positive, got {self.duration}")

    def end_state(self) -> State:
        return evaluate_primitive(self, self.duration)


def evaluate_primitive(prim: MotionPrimitive, t: float) -> State:
    """Evaluate the closed-form primitive polynomial at time t in [0, duration]."""
    if not (-1e-12 <= t <= prim.duration + 1e-12):
        raise ValueError(f"t={t} outside [0, {prim.duration}]")
    t = min(max(t, 0.0), prim.duration)
    p = prim.start.position + t * prim.start.velocity + 0.5 * t * t * prim.accel
    v = prim.start.velocity + t * prim.accel
    return State(p, v)


def primitive_cost(accel: Vec3, duration: float, rho: float) -> float:
    """Weighted sum of squared control effort and duration."""
    if not duration > 0.0:
        raise ValueError("duration must be positive")
    u = np.asarray(accel, dtype=np.float64)
    return float(np.dot(u, u) * duration + rho * duration)


@dataclass(frozen=True)
class PlannerConfig:
    """Physical parameters plus search/bench knobs.

    The per-axis command set is {-u_max, ..., -du, 0, du, ..., u_max}; u_max
    must be an integer multiple of du so the set is symmetric and contains 0.
    """

    rho: float = 16.0
    tau1: float = 0.5
    v_max: float = 4.0
    u_max: float = 2.0
    du: float = 2.0
    num_levels: int = 4
    level1_halfwidth_cells: int = 16
    clearance: float = 1.5
    expansion_limit: int = 3_000_000
    replan_horizon: float = 1.0

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ConfigError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        errs = []
        if not self.rho > 0:
            errs.append(f"rho must be > 0 (got {self.rho})")
        if not self.tau1 > 0:
            errs.append(f"tau1 must be > 0 (got {self.tau1})")
        if not (0 < self.du <= self.u_max):
            errs.append(f"need 0 < du <= u_max (got du={self.du}, u_max={self.u_max})")
        elif abs(self.u_max / self.du - round(self.u_max / self.du)) > 1e-9:
            errs.append(f"u_max/du must be an integer (got {self.u_max / self.du})")
        if not (1 <= self.num_levels <= MAX_LEVELS):
            errs.append(f"num_levels must be in [1, {MAX_LEVELS}] (got {self.num_levels})")
        if not self.v_max > 0:
            errs.append(f"v_max must be > 0 (got {self.v_max})")
        if self.level1_halfwidth_cells < 1:
            errs.append("level1_halfwidth_cells must be >= 1")
        if self.clearance < 0:
            errs.append("clearance must be >= 0")
        if self.expansion_limit < 1:
            errs.append("expansion_limit must be >= 1")
        if not self.replan_horizon > 0:
            errs.append("replan_horizon must be > 0")
        return errs

    @property
    def u_min(self) -> float:
        """Smallest nonzero command magnitude of the per-axis set."""
        return self.du

    def axis_commands(self) -> np.ndarray:
        """Per-axis Level-1 command values, ascending."""
        m = int(round(self.u_max / self.du))
        return np.arange(-m, m + 1, dtype=np.float64) * self.du


_CONFIG_FIELDS = {
    "rho": float,
    "tau1": float,
    "v_max": float,
    "u_max": float,
    "du": float,
    "num_levels": int,
    "level1_halfwidth_cells": int,
    "clearance": float,
    "expansion_limit": int,
    "replan_horizon": float,
}


def load_config(path) -> PlannerConfig:
    """Read a key=value config file. '#' starts a comment; unknown keys are errors."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _CONFIG_FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_FIELDS[key](val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return PlannerConfig(**values)


def save_config(cfg: PlannerConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in _CONFIG_FIELDS:
            fh.write(f"{key}={getattr(cfg, key)}\n")


class LatticeMode(enum.Enum):
    """Successor-generation scheme. UNIFORM is the single-level baseline."""

    UNIFORM = "uniform"
    MRES_FIXED = "mres-fixed"
    MRES_VARIABLE = "mres-var"


@dataclass(frozen=True)
class Resolutions:
    """Per-level grid spacings. Arrays are indexed by level-1 (0-based)."""

    dp: np.ndarray
    dv: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dp", np.asarray(self.dp, dtype=np.float64))
        object.__setattr__(self, "dv", np.asarray(self.dv, dtype=np.float64))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=np.float64))

    @property
    def num_levels(self) -> int:
        return len(self.dp)

    def dp_at(self, level: int) -> float:
        return float(self.dp[level - 1])

    def dv_at(self, level: int) -> float:
        return float(self.dv[level - 1])

    def tau_at(self, level: int) -> float:
        return float(self.tau[level - 1])


def derive_resolutions(cfg: PlannerConfig) -> Resolutions:
    """Smallest position/velocity change of a Level-1 primitive, scaled per level.

    Position spacing doubles per level. Velocity spacing is only halved after
    every second level (it is already coarse relative to position when
    tau1 < 1), so dv doubles at levels 3 and 4 only. Fixed-scheme durations
    double per level.
    """
    errors = cfg.validation_errors()
    if errors:
        raise ConfigError("; ".join(errors))
    dp1 = 0.5 * cfg.tau1 * cfg.tau1 * cfg.u_min
    dv1 = cfg.tau1 * cfg.u_min
    levels = np.arange(cfg.num_levels)
    dp = dp1 * 2.0 ** levels
    dv = dv1 * 2.0 ** (levels // 2)
    tau = cfg.tau1 * 2.0 ** levels
    return Resolutions(dp=dp, dv=dv, tau=tau)


# A lattice key is (level, ix, iy, iz, ivx, ivy, ivz): position cells relative
# to the grid origin at the level's spacing, velocity cells at the level's
# velocity spacing.
LatticeKey = tuple


def quantize_state(s: State, level: int, res: Resolutions, origin: Vec3) -> LatticeKey:
    """Map a state to its integer lattice key at the given level."""
    if not (1 <= level <= res.num_levels):
        raise ValueError(f"level {level} outside [1, {res.num_levels}]")
    pc = round_half_away((s.position - origin) / res.dp_at(level)).astype(np.int64)
    vc = round_half_away(s.velocity / res.dv_at(level)).astype(np.int64)
    return (level, int(pc[0]), int(pc[1]), int(pc[2]), int(vc[0]), int(vc[1]), int(vc[2]))


def dequantize_key(key: LatticeKey, res: Resolutions, origin: Vec3) -> State:
    """Grid point at the key's cell centers (inverse of quantize on-grid states)."""
    level = key[0]
    p = origin + np.array(key[1:4], dtype=np.float64) * res.dp_at(level)
    v = np.array(key[4:7], dtype=np.float64) * res.dv_at(level)
    return State(p, v)


def snap_to_grid(values, spacing: float, offset=0.0):
    """Snap scalars or arrays to multiples of `spacing` relative to `offset`."""
    return offset + round_half_away((np.asarray(values, dtype=np.float64) - offset) / spacing) * spacing
