"""Multi-robot behavior sequencing with finite-time barrier QP filters."""

from .barriers import (
    Collision,
    Connectivity,
    ConstraintRow,
    Custom,
    FcbfParams,
    KeepWithin,
    ObstacleAvoid,
    class_k,
    constraint_row,
    eval_barrier,
    settling_time_bound,
    team_settling_bound,
)
from .geometry import (
    Domain,
    InteractionGraph,
    Obstacle,
    RobotState,
    is_cycle_graph,
    is_spanning_subgraph,
    proximity_graph,
    voronoi_centroids,
)
from .mission import BehaviorSpec, MissionPlan, builtin_scenario, parse_mission, serialize_mission, validate
from .qp import QpProblem, QpSolution, oracle_solve, solve
from .sim import DelaySpec, RunRecord, SimConfig, run, write_outputs

__version__ = "0.1.0"
