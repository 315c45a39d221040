"""Belief-tree trajectory planner for on-ramp highway merging."""

from .abt import (
    ABTSolver,
    BeliefNode,
    DegenerateBeliefError,
    GenerativeModel,
    SolverConfig,
    evaluate_policy,
)
from .config import RunConfig, load_run_config
from .lanes import Lane, LaneMap, load_map, map_from_dict
from .merging import (
    ActionPair,
    EgoState,
    JointState,
    MergeModel,
    ModelConfig,
    NonEgoState,
    ObservationVector,
    idm_accel,
)
from .scenario import (
    Scenario,
    SimResult,
    batch_run,
    load_scenario,
    run,
    synth_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ABTSolver",
    "ActionPair",
    "BeliefNode",
    "DegenerateBeliefError",
    "EgoState",
    "GenerativeModel",
    "JointState",
    "Lane",
    "LaneMap",
    "MergeModel",
    "ModelConfig",
    "NonEgoState",
    "ObservationVector",
    "RunConfig",
    "Scenario",
    "SimResult",
    "SolverConfig",
    "batch_run",
    "evaluate_policy",
    "idm_accel",
    "load_map",
    "load_run_config",
    "load_scenario",
    "map_from_dict",
    "run",
    "synth_scenario",
]
