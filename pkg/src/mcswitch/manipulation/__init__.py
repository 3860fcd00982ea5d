from .assign import Assignment, RobotFleet, assign_channels, channel_positions, square8_contacts
from .loop import qs_controller_step, run_manipulation
from .pathfind import Grid, NavigationPlan, audit_plan, object_obstacle, plan_paths
