"""Event-triggered switching loop.

Each step: error terms -> QP input under the current delta -> trigger check.
When the trigger fires (or at t = 0) the switching MILP picks a new delta and
the QP is re-solved under it. If the re-solved QP still exceeds u_u the
MILP's own input is applied for that step; it satisfies the decrease
constraint by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import ChannelConfig
from ..dynamics import PlantState, step
from ..lyapunov import ErrorState, active_s, error_state
from ..qp import (EventFlags, QpInstance, check_events, check_events_symmetric, qp_analytic, qp_symmetric)
from ..switching import (SwitchDecision, SwitchProblem, solve_switch_bigM, solve_switch_brute,
                         solve_switch_exact, solve_switch_symmetric)
from .trace import SimTrace, TraceBuilder

SOLVERS = {
    "exact": solve_switch_exact,
    "bigM": solve_switch_bigM,
    "brute": solve_switch_brute,
}

NO_EVENT = EventFlags(False, False)


@dataclass
class ControlOutput:
    err: ErrorState
    delta: np.ndarray
    u: np.ndarray
    flags: EventFlags
    decision: Optional[SwitchDecision] = None
    fallback: bool = False

    @property
    def event(self) -> bool:
        return self.decision is not None


class SwitchingController:
    """Holds delta between calls; one call per sample instant."""

    def __init__(self, plant, ref, gains, solver: str = "exact", symmetric: bool = False):
        if symmetric:
            self.solve = solve_switch_symmetric
        else:
            if solver not in SOLVERS:
                raise ValueError(f"unknown switching solver {solver!r}; choose from {sorted(SOLVERS)}")
            self.solve = SOLVERS[solver]
        self.plant, self.ref, self.gains, self.symmetric = plant, ref, gains, symmetric
        self.delta: Optional[np.ndarray] = None
        self.stats = {"switches": 0, "fallbacks": 0, "bigM_nodes": 0}

    @property
    def config(self) -> ChannelConfig:
        return self.plant.config

    def _qp(self, err, delta):
        inst = QpInstance(active_s(err, self.config, delta), err.r)
        if self.symmetric:
            flags = check_events_symmetric(inst, np.zeros(0), self.config.u_u)
            u_bar = None if flags.infeasibility_flag else qp_symmetric(inst)
            if u_bar is not None:
                flags = check_events_symmetric(inst, u_bar, self.config.u_u)
        else:
            flags = check_events(inst, np.zeros(0), self.config.u_u)
            u_bar = None if flags.infeasibility_flag else qp_analytic(inst)
            if u_bar is not None:
                flags = check_events(inst, u_bar, self.config.u_u)
        return u_bar, flags

    def _scatter(self, delta, u_bar):
        u = np.zeros(self.config.m)
        u[np.flatnonzero(delta)] = u_bar
        return u

    def switch(self, err: ErrorState, flags: EventFlags = NO_EVENT) -> ControlOutput:
        problem = SwitchProblem.from_error(err, self.config, self.gains, self.delta)
        dec = self.solve(problem)
        self.delta = dec.delta
        self.stats["switches"] += 1
        self.stats["bigM_nodes"] += int(dec.stats.get("nodes", 0))
        u_bar, after = self._qp(err, dec.delta)
        if after.fired:
            self.stats["fallbacks"] += 1
            return ControlOutput(err, dec.delta, dec.u.copy(), flags, dec, True)
        return ControlOutput(err, dec.delta, self._scatter(dec.delta, u_bar), flags, dec)

    def __call__(self, state: PlantState) -> ControlOutput:
        err = error_state(state, self.ref, self.gains, self.plant)
        if self.delta is None:
            return self.switch(err)
        u_bar, flags = self._qp(err, self.delta)
        if flags.fired:
            return self.switch(err, flags)
        return ControlOutput(err, self.delta, self._scatter(self.delta, u_bar), flags)


def n_steps(duration: float, dt: float) -> int:
    k = duration / dt
    return int(round(k)) if abs(k - round(k)) < 1e-9 * max(1.0, k) else int(math.floor(k))


def run(scenario) -> SimTrace:
    """Simulate a second-order or quasi-static scenario without navigation delays."""
    plant, gains = scenario.plant, scenario.gains
    ctrl = SwitchingController(plant, scenario.ref, gains, scenario.solver, scenario.symmetric)
    state = PlantState(np.array(scenario.q0, dtype=float),
                       None if plant.order == 1 else np.array(scenario.v0, dtype=float), 0.0)
    dt = scenario.dt
    N = n_steps(scenario.duration, dt)
    builder = TraceBuilder(plant.n, plant.config.m, plant.order == 2)
    V0 = None
    for k in range(N + 1):
        out = ctrl(state)
        err = out.err
        if V0 is None:
            V0 = err.V
        V_d = V0 * math.exp(-gains.c_d * state.t)
        builder.append(state.t, state.q, state.v, err.e_q, err.e_v, err.V, V_d, out.u, out.delta,
                       out.decision.rho if out.event else None, out.event,
                       out.flags.infeasibility_flag, out.flags.bound_flag)
        if k == N:
            break
        state = step(plant, state, out.delta, out.u, dt, scenario.integrator, t_next=(k + 1) * dt,
                     symmetric=scenario.symmetric)
    meta = {"scenario": scenario.name, "scenario_hash": scenario.digest, "dt": dt, "seed": scenario.seed,
            "n_a": plant.config.n_a, "u_u": plant.config.u_u, "c": gains.c, "c_d": gains.c_d,
            "solver": "symmetric" if scenario.symmetric else scenario.solver, "solver_stats": ctrl.stats}
    return builder.build(meta)


@dataclass(frozen=True)
class SweepRow:
    n_a: int
    events: int
    min_gap: float
    mean_gap: float

    def cells(self) -> list[str]:
        fmt = lambda x: "-" if math.isnan(x) else f"{1000 * x:.0f}"
        mean = "-" if math.isnan(self.mean_gap) else f"{1000 * self.mean_gap:.1f}"
        return [str(self.n_a), fmt(self.min_gap), mean, str(self.events)]


def summarize_events(trace: SimTrace) -> tuple[int, float, float]:
    """(post-initialization event count, min gap, mean gap); gaps include the t = 0 selection."""
    times = trace.event_times
    gaps = np.diff(times)
    count = trace.post_init_event_times().size
    if gaps.size == 0:
        return count, float("nan"), float("nan")
    return count, float(gaps.min()), float(gaps.mean())


def sweep_na(scenario, na_values) -> list[SweepRow]:
    """Re-run the scenario for each n_a and tabulate event statistics."""
    rows = []
    for n_a in na_values:
        if not 1 <= n_a <= scenario.plant.config.m:
            raise ValueError(f"n_a={n_a} outside [1, m={scenario.plant.config.m}]")
        trace = run(scenario.with_na(n_a))
        count, gmin, gmean = summarize_events(trace)
        if not math.isnan(gmin) and gmin <= scenario.dt * (1 + 1e-9):
            raise AssertionError(f"n_a={n_a}: consecutive events {gmin} s apart (dt={scenario.dt})")
        rows.append(SweepRow(n_a, count, gmin, gmean))
    return rows


def format_sweep(rows: list[SweepRow]) -> str:
    lines = ["n_a  min_gap[ms]  mean_gap[ms]  events"]
    for r in rows:
        c = r.cells()
        lines.append(f"{c[0]:>3}  {c[1]:>11}  {c[2]:>12}  {c[3]:>6}")
    return "\n".join(lines)
