"""Switching controller: choose n_a active channels and inputs maximizing the
Lyapunov-decrease margin rho.

    max rho  s.t.  0 <= u <= u_u,  rho >= 0,  r + rho <= s_b^T B(delta) u,
                   sum(delta) = n_a.

For a fixed delta the inner maximum is separable, so the exact solver ranks
channels by g_i = max(0, b_i^T s_b). ``solve_switch_bigM`` solves the linear
big-M reformulation by branch-and-bound as an independent cross-check, and
``solve_switch_brute`` enumerates subsets and vertex inputs.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .core import ChannelConfig, as_delta, check_linear_span
from .errors import SwitchInfeasible

FEAS_TOL = 1e-12


@dataclass(frozen=True)
class SwitchProblem:
    s_b: np.ndarray
    r: float
    V: float
    config: ChannelConfig
    c: float = 1.0
    c_d: float = 0.5
    prev_delta: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "s_b", np.asarray(self.s_b, dtype=float))
        if self.s_b.shape != (self.config.n,):
            raise ValueError("s_b must have the configuration dimension")

    @classmethod
    def from_error(cls, err, config: ChannelConfig, gains, prev_delta=None) -> "SwitchProblem":
        return cls(err.s_b, err.r, err.V, config, gains.c, gains.c_d, prev_delta)

    @property
    def projections(self) -> np.ndarray:
        return self.config.columns.T @ self.s_b


@dataclass(frozen=True)
class SwitchDecision:
    delta: np.ndarray
    u: np.ndarray
    rho: float
    optimal: bool = True
    stats: dict = field(default_factory=dict)

    @property
    def u_bar(self) -> np.ndarray:
        return self.u[np.flatnonzero(self.delta)]


def _rank_channels(scores: np.ndarray, prev_delta) -> list[int]:
    """Descending score; ties prefer previously active channels, then low index."""
    prev = np.zeros(scores.size, dtype=int) if prev_delta is None else as_delta(prev_delta, scores.size)
    return sorted(range(scores.size), key=lambda i: (-scores[i], -prev[i], i))


def _scale(p: SwitchProblem) -> float:
    return max(1.0, abs(p.r), p.config.u_u * float(np.abs(p.projections).sum()))


def solve_switch_exact(p: SwitchProblem) -> SwitchDecision:
    a = p.projections
    g = np.maximum(a, 0.0)
    chosen = _rank_channels(g, p.prev_delta)[: p.config.n_a]
    rho = p.config.u_u * float(g[chosen].sum()) - p.r
    if rho < -FEAS_TOL * _scale(p):
        raise SwitchInfeasible(f"switching MILP infeasible: best margin {rho:.6g} < 0", rho)
    delta = np.zeros(p.config.m, dtype=int)
    delta[chosen] = 1
    u = np.where((delta == 1) & (a > 0), p.config.u_u, 0.0)
    return SwitchDecision(delta, u, max(rho, 0.0))


def solve_switch_symmetric(p: SwitchProblem) -> SwitchDecision:
    """Variant with -u_u <= u <= u_u; needs only a linear span of the columns."""
    if not check_linear_span(p.config):
        raise ValueError("symmetric switching requires the channel columns to span R^n")
    a = p.projections
    g = np.abs(a)
    chosen = _rank_channels(g, p.prev_delta)[: p.config.n_a]
    rho = p.config.u_u * float(g[chosen].sum()) - p.r
    if rho < -FEAS_TOL * _scale(p):
        raise SwitchInfeasible(f"symmetric switching MILP infeasible: best margin {rho:.6g} < 0", rho)
    delta = np.zeros(p.config.m, dtype=int)
    delta[chosen] = 1
    u = delta * p.config.u_u * np.sign(a)
    return SwitchDecision(delta, u, max(rho, 0.0))


def solve_switch_brute(p: SwitchProblem) -> SwitchDecision:
    """Enumerate every channel subset and every vertex input u in {0, u_u}^n_a."""
    a = p.projections
    m, k, uu = p.config.m, p.config.n_a, p.config.u_u
    verts = np.array(list(itertools.product((0.0, uu), repeat=k)))
    best = None
    for subset in itertools.combinations(range(m), k):
        vals = verts @ a[list(subset)] - p.r
        j = int(np.argmax(vals))
        if best is None or vals[j] > best[0]:
            best = (float(vals[j]), subset, verts[j])
    rho, subset, vert = best
    if rho < -FEAS_TOL * _scale(p):
        raise SwitchInfeasible(f"no subset reaches a nonnegative margin ({rho:.6g})", rho)
    delta = np.zeros(m, dtype=int)
    delta[list(subset)] = 1
    u = np.zeros(m)
    u[list(subset)] = vert
    return SwitchDecision(delta, u, max(rho, 0.0))


# --- big-M MILP by branch-and-bound ----------------------------------------


def bigM_lp(p: SwitchProblem):
    """LP data of the big-M MILP; variables x = [u (m), delta (m), z (m), rho].

    z_i stands in for u_i * delta_i through
        z_i <= u_i,  u_u (1 - delta_i) + z_i >= u_i,  z_i <= u_u delta_i,  z_i >= 0.
    """
    m, uu = p.config.m, p.config.u_u
    a = p.projections
    nv = 3 * m + 1
    iu, idl, iz, irho = 0, m, 2 * m, 3 * m
    rows, rhs = [], []
    for i in range(m):
        row = np.zeros(nv)
        row[iz + i], row[iu + i] = 1.0, -1.0
        rows.append(row), rhs.append(0.0)
        row = np.zeros(nv)
        row[iu + i], row[iz + i], row[idl + i] = 1.0, -1.0, uu
        rows.append(row), rhs.append(uu)
        row = np.zeros(nv)
        row[iz + i], row[idl + i] = 1.0, -uu
        rows.append(row), rhs.append(0.0)
    row = np.zeros(nv)
    row[irho] = 1.0
    row[iz:iz + m] = -a
    rows.append(row), rhs.append(-p.r)
    A_eq = np.zeros((1, nv))
    A_eq[0, idl:idl + m] = 1.0
    cost = np.zeros(nv)
    cost[irho] = -1.0
    return cost, np.array(rows), np.array(rhs), A_eq, np.array([float(p.config.n_a)])


def solve_switch_bigM(p: SwitchProblem, int_tol: float = 1e-9) -> SwitchDecision:
    """Best-first branch-and-bound on delta with LP relaxations (HiGHS simplex)."""
    m = p.config.m
    cost, A_ub, b_ub, A_eq, b_eq = bigM_lp(p)
    base_bounds = [(0.0, None)] * m + [None] * m + [(0.0, None)] * m + [(0.0, None)]

    def relax(lo, hi):
        bounds = list(base_bounds)
        for i in range(m):
            bounds[m + i] = (lo[i], hi[i])
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        return res if res.status == 0 else None

    counter = itertools.count()
    lo0, hi0 = np.zeros(m), np.ones(m)
    root = relax(lo0, hi0)
    nodes = 1
    if root is None:
        raise SwitchInfeasible("big-M relaxation infeasible at the root", -np.inf)
    heap = [(root.fun, next(counter), lo0, hi0, root)]
    incumbent = None
    while heap:
        bound, _, lo, hi, res = heapq.heappop(heap)
        if incumbent is not None and bound >= incumbent.fun - 1e-12:
            continue
        dl = res.x[m:2 * m]
        frac = np.abs(dl - np.round(dl))
        if frac.max() <= int_tol:
            incumbent = res
            continue
        j = int(np.argmax(frac))
        for val in (1.0, 0.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[j] = hi2[j] = val
            child = relax(lo2, hi2)
            nodes += 1
            if child is not None and (incumbent is None or child.fun < incumbent.fun - 1e-12):
                heapq.heappush(heap, (child.fun, next(counter), lo2, hi2, child))
    if incumbent is None:
        raise SwitchInfeasible("big-M MILP infeasible", -np.inf)
    x = incumbent.x
    delta = np.round(x[m:2 * m]).astype(int)
    # channels with b_i^T s_b <= 0 do not raise rho; report the canonical u = 0 there
    u = np.where((delta == 1) & (p.projections > 0), x[2 * m:3 * m], 0.0)
    return SwitchDecision(delta, u, float(x[3 * m]), True,
                          {"nodes": nodes, "z": x[2 * m:3 * m].copy(), "u_lp": x[:m].copy()})
