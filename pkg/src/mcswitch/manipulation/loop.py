"""Cooperative pushing with noninstantaneous switching.

After every switch the robots are reassigned to the newly active channels
and walk there on the grid. The object receives no force meanwhile, so the
state is frozen; the window spans ceil(Delta_k / dt) steps. With
``no_delay`` the robots teleport and the loop reduces to the plain
quasi-static controller, which is the reference run for the time-shift check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import PlantState, step
from ..errors import ConfigError
from ..lyapunov import error_state
from ..qp import EventFlags
from ..sim.engine import SwitchingController, n_steps
from ..sim.trace import SimTrace, TraceBuilder
from .assign import RobotFleet, assign_channels, channel_positions
from .pathfind import Grid, audit_plan, object_obstacle, plan_paths


def qs_controller_step(ctrl: SwitchingController, state: PlantState, mode: str):
    """One sample of the delayed controller.

    ``navigate``: zero input, no trigger evaluation. ``manipulate``: QP input
    under the current delta, switching when the trigger fires.
    Returns (u, EventFlags, ControlOutput or None).
    """
    if mode == "navigate":
        return np.zeros(ctrl.config.m), EventFlags(False, False), None
    if mode != "manipulate":
        raise ValueError(f"unknown mode {mode!r}")
    out = ctrl(state)
    return out.u, out.flags, out


@dataclass
class SwitchRecord:
    t: float
    pose: list
    delta_num: list
    assignment: list
    cost: float
    steps: int
    Delta: float
    window_steps: int
    paths: list


def _window_steps(Delta: float, dt: float) -> int:
    return int(math.ceil(Delta / dt - 1e-9)) if Delta > 0 else 0


def _reassign(t, fleet, q, delta, base, fleet_spec, l, a, standoff, step_time, dt, no_delay):
    goals_all = channel_positions(q, l, a, standoff)
    asg = assign_channels(fleet, delta, goals_all)
    goals = goals_all[list(asg.channels)]
    grid = object_obstacle(base, q, a, fleet_spec.radius)
    dists = np.linalg.norm(fleet.positions - goals, axis=1)
    order = sorted(range(fleet.size), key=lambda i: (-dists[i], i))  # longest trip first
    plan = plan_paths(fleet.positions, goals, grid, step_time, order)
    problems = audit_plan(plan, grid)
    if problems:
        raise AssertionError("cooperative A* produced conflicts: " + "; ".join(problems[:3]))
    w = 0 if no_delay else _window_steps(plan.delta, dt)
    rec = SwitchRecord(t, q.tolist(), [int(i) + 1 for i in np.flatnonzero(delta)], list(asg.channels), asg.cost,
                       plan.steps, plan.delta, w, [[grid.to_point(c).tolist() for c in p] for p in plan.paths])
    return RobotFleet(goals, asg.channels, fleet_spec.speed, fleet_spec.radius), rec


def run_manipulation(scenario, no_delay: bool | None = None) -> SimTrace:
    plant, gains, ref = scenario.plant, scenario.gains, scenario.ref
    if plant.order != 1:
        raise ConfigError("manipulation runs need the quasi-static pusher plant")
    if scenario.fleet is None:
        raise ConfigError("manipulation runs need a [fleet] section")
    if np.any(ref.qd_dot(0.0) != 0) or ref.kind != "setpoint":
        raise ConfigError("noninstantaneous switching requires a set-point reference (q_d' = 0)")
    grid_spec = scenario.grid
    if grid_spec is None:
        from ..sim.scenario import GridSpec

        grid_spec = GridSpec()
    no_delay = grid_spec.no_delay if no_delay is None else no_delay
    fleet_spec = scenario.fleet
    fleet = RobotFleet.unassigned(fleet_spec.positions, fleet_spec.speed, fleet_spec.radius)
    base = Grid.empty(grid_spec.extent, grid_spec.cell)
    step_time = grid_spec.cell / fleet_spec.speed
    standoff = fleet_spec.radius + grid_spec.cell
    l = float(scenario.raw.get("channels", {}).get("l", 0.3))
    a = plant.half_side

    ctrl = SwitchingController(plant, ref, gains, scenario.solver)
    dt = scenario.dt
    N = n_steps(scenario.duration, dt)
    builder = TraceBuilder(plant.n, plant.config.m, False)
    state = PlantState(np.array(scenario.q0, dtype=float), None, 0.0)
    records: list[SwitchRecord] = []
    windows = []
    nav_left = 0
    nav_time = 0.0  # time spent navigating so far; V_d runs on manipulation time only
    V0 = None
    for k in range(N + 1):
        t = k * dt
        state = PlantState(state.q, None, t)
        event, rho = False, None
        if nav_left > 0:
            mode = "navigate"
            u, flags, _ = qs_controller_step(ctrl, state, mode)
            err, delta = error_state(state, ref, gains, plant), ctrl.delta
            nav_left -= 1
        else:
            mode = "manipulate"
            u, flags, out = qs_controller_step(ctrl, state, mode)
            err, delta = out.err, out.delta
            if out.event:
                event, rho = True, out.decision.rho
                fleet, rec = _reassign(t, fleet, state.q, delta, base, fleet_spec, l, a, standoff, step_time, dt, no_delay)
                records.append(rec)
                if rec.window_steps > 0:
                    windows.append((t, t + rec.window_steps * dt))
                    nav_left = rec.window_steps - 1
                    mode = "navigate"
                    u = np.zeros(plant.config.m)
        if V0 is None:
            V0 = err.V
        V_d = V0 * math.exp(-gains.c_d * (t - nav_time))
        builder.append(t, state.q, None, err.e_q, None, err.V, V_d, u, delta, rho, event,
                       flags.infeasibility_flag, flags.bound_flag, mode)
        if mode == "navigate":
            nav_time += dt
        if k == N:
            break
        q_before = state.q
        state = step(plant, state, delta, u, dt, scenario.integrator, t_next=(k + 1) * dt)
        if mode == "manipulate":
            # robots in contact ride along with the object
            pos = channel_positions(state.q, l, a, standoff)[list(fleet.assignment)]
            fleet = RobotFleet(pos, fleet.assignment, fleet_spec.speed, fleet_spec.radius)
        elif not np.array_equal(q_before, state.q):
            raise AssertionError("object moved during navigation")
    meta = {"scenario": scenario.name, "scenario_hash": scenario.digest, "dt": dt, "seed": scenario.seed,
            "n_a": plant.config.n_a, "u_u": plant.config.u_u, "c": gains.c, "c_d": gains.c_d,
            "solver": scenario.solver, "solver_stats": ctrl.stats, "no_delay": no_delay,
            "nav_windows": windows, "switches": [r.__dict__ for r in records],
            "robot_positions": fleet.positions.tolist()}
    return builder.build(meta)
