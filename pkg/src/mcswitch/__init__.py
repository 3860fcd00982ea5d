"""Event-triggered switching control for underactuated multi-channel systems."""

from .core import ChannelConfig, build_B, check_positive_span, delta_num, preset, selection_matrix
from .dynamics import PlantState, cube_plant, point_plant, pusher_plant, square_plant, step
from .errors import ConfigError, NumericalFailure, PlanningFailure, SwitchInfeasible
from .feasibility import compute_span_constants, mu_max, mu_t
from .lyapunov import ControllerGains, ReferenceTrajectory, error_state, setpoint, sinusoid
from .qp import QpInstance, check_events, qp_analytic, qp_oracle
from .switching import SwitchDecision, SwitchProblem, solve_switch_bigM, solve_switch_brute, solve_switch_exact

__version__ = "0.1.0"
