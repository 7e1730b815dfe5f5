"""Kinodynamic trajectory planning on local multiresolution state lattices."""

from .core import (
    ConfigError,
    LatticeMode,
    MotionPrimitive,
    PlannerConfig,
    Resolutions,
    State,
    derive_resolutions,
    evaluate_primitive,
    load_config,
    primitive_cost,
    quantize_state,
)
from .heuristic import (
    Heuristic1DTable,
    axis_control_bound,
    build_1d_table,
    h_1d,
    h_time_bound,
    load_or_build_table,
)
from .lattice import (
    LatticeState,
    MultiresGrid,
    Successor,
    adjust_primitive,
    goal_actions,
    lattice_state,
    make_grid,
    special_actions,
    successors,
    variable_duration,
)
from .search import (
    PlanningInputError,
    SearchResult,
    SearchStatus,
    astar,
    level_astar,
    make_heuristic,
    plan,
    reconstruct_trajectory,
)
from .world import (
    Box,
    DistanceField,
    VoxelWorld,
    WorldGenParams,
    build_distance_field,
    generate_world,
    load_world,
    primitive_collision_free,
    save_world,
    state_valid,
)

__version__ = "0.1.0"
