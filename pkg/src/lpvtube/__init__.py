"""Tube-based LPV model predictive control for autonomous lane keeping.

The package has an offline part (gain-scheduling LMI synthesis and the
robust invariant set ``S``, stored as a JSON artifact) and an online part
(longitudinal speed MPC feeding predicted speeds to the lateral tube MPC),
tied together by a closed-loop simulation harness and the ``lpvtube`` CLI.
"""

from .artifact import ArtifactError, load_artifact, save_artifact
from .config import ConfigError, ScenarioConfig, default_config, load_config
from .longitudinal import LongCommand, solve_longitudinal_step
from .opt import QpProblem, QpSolution, solve_lmi_feasibility, solve_lp, solve_qp
from .polytope import HPolytope, VPolytope
from .simulation import SimLog, compute_metrics, read_csv, run_scenario
from .synthesis import (GainSchedule, RpiSet, compute_rpi, synthesize_gains,
                        validate_invariance)
from .tube_mpc import (SchedulingTube, TubeSolution, build_lateral_qp, build_scheduling_tube,
                       solve_lateral_step)
from .vehicle import LpvModel, VehicleParams, build_lateral_lpv, build_longitudinal

__version__ = "0.1.0"
