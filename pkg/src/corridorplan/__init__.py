"""Sphere-corridor trajectory planning for quadrotors in point-cloud maps.

Modules: ``world`` (obstacle maps, forests, sensor), ``pathsearch`` (grid
A*), ``corridor`` (batch-sampled sphere corridors), ``trajopt`` (trajectory
optimization), ``replan`` (receding-horizon replanning) and ``bench``
(closed-loop simulation, sweeps and export).
"""

from .bench import TrialResult, TrialSpec, export_plots, plan_offline, run_sweep, run_trial
from .config import default_config, load_config
from .corridor import Corridor, SamplerConfig, Sphere, batch_sample, generate_corridor, generate_one_sphere, lens_volume
from .errors import (
    BatchSampleFailed,
    CorridorError,
    EmptyWorldError,
    LineSearchError,
    NoPathError,
    PlannerError,
    ReplanError,
    SphereRejectedError,
)
from .pathsearch import GuidePath, astar
from .replan import PlanSession, ReplanConfig, plan_cycle, receding_replan, select_replan_state, should_replan
from .trajopt import Boundary, OptimizerConfig, Trajectory, minco_construct, optimize, validate
from .world import ForestSpec, SensorSpec, WorldModel, generate_forest, nearest_obstacle, sense, voxel_occupancy

__version__ = "0.1.0"

__all__ = [
    "TrialResult", "TrialSpec", "export_plots", "plan_offline", "run_sweep", "run_trial",
    "default_config", "load_config",
    "Corridor", "SamplerConfig", "Sphere", "batch_sample", "generate_corridor", "generate_one_sphere",
    "lens_volume",
    "BatchSampleFailed", "CorridorError", "EmptyWorldError", "LineSearchError", "NoPathError", "PlannerError",
    "ReplanError", "SphereRejectedError",
    "GuidePath", "astar",
    "PlanSession", "ReplanConfig", "plan_cycle", "receding_replan", "select_replan_state", "should_replan",
    "Boundary", "OptimizerConfig", "Trajectory", "minco_construct", "optimize", "validate",
    "ForestSpec", "SensorSpec", "WorldModel", "generate_forest", "nearest_obstacle", "sense", "voxel_occupancy",
]
