from .engine import SwitchingController, run, sweep_na
from .scenario import Scenario, feasibility, from_dict, load
from .trace import SimTrace, plot_trace, read_csv, write_csv
