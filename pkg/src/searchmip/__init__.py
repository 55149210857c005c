"""Exact MILP planning for multi-searcher detection of a moving, camouflaging target."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DetectionModel,
    EffortBounds,
    EffortMap,
    MotionGraph,
    OperationalLimits,
    SearcherClass,
    SearchInstance,
    SearchPlan,
    Violation,
    check_plan_feasibility,
    derive_effort,
    effort_bounds,
    plan_from_trajectories,
    plan_trajectories,
    validate_instance,
)
from .generators import grid_instance  # noqa: F401
from .targets import (  # noqa: F401
    ConditionalTargetModel,
    MarkovTargetModel,
    enumerate_paths,
    occupancy,
    sample_paths,
)
from .evaluate import (  # noqa: F401
    CutData,
    DetectabilityIndex,
    build_detectability,
    cut_data,
    detection_prob_forward,
    f_conditional,
    f_markov,
    secant_delta,
    secant_delta_table,
)
from .methods import MethodOptions, SolveReport, run_method  # noqa: F401
from .oracle import OracleBudget, brute_force_optimum, monte_carlo_eval  # noqa: F401
