"""Inter-event QP controller:  min 1/2 |u|^2  s.t.  s^T u >= r,  u >= 0.

``qp_analytic`` is the closed form used in the loop; ``qp_oracle`` solves the
same problem by brute-force active-set enumeration and exists to check it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DENOM_EPS = 1e-14


class QpInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class QpInstance:
    s: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "s", np.atleast_1d(np.asarray(self.s, dtype=float)))
        object.__setattr__(self, "r", float(self.r))
        if not (np.all(np.isfinite(self.s)) and np.isfinite(self.r)):
            raise ValueError("QP data must be finite")


@dataclass(frozen=True)
class EventFlags:
    infeasibility_flag: bool
    bound_flag: bool

    @property
    def fired(self) -> bool:
        return self.infeasibility_flag or self.bound_flag


def is_infeasible(inst: QpInstance) -> bool:
    """(r > 0) and (max s_i <= 0), with the positive part guarded numerically."""
    if inst.r <= 0:
        return False
    pos = np.maximum(inst.s, 0.0)
    return bool(inst.s.max() <= 0 or pos @ pos < DENOM_EPS)


def qp_analytic(inst: QpInstance) -> np.ndarray:
    if inst.r <= 0:
        return np.zeros_like(inst.s)
    if is_infeasible(inst):
        raise QpInfeasible("r > 0 with no positive s_i: the event must fire")
    pos = np.maximum(inst.s, 0.0)
    return pos * (inst.r / (pos @ pos))


def qp_oracle(inst: QpInstance, tol: float = 1e-10) -> np.ndarray:
    """Enumerate every active set (clamped indices x stability row on/off).

    For each pattern the equality-constrained KKT system is solved with a
    dense linear solve, and the first point satisfying primal feasibility,
    dual feasibility and complementary slackness is returned. The problem is
    strictly convex, so that point is the unique minimizer.
    """
    s, r = inst.s, inst.r
    k = s.size
    scale = max(1.0, abs(r), float(np.abs(s).max()))
    for stab in (False, True):
        for size in range(k + 1):
            for clamped in itertools.combinations(range(k), size):
                u, mult = _kkt_solve(s, r, list(clamped), stab)
                if u is None:
                    continue
                u[list(clamped)] = 0.0  # pinned by the active set; the solve leaves round-off there
                lam_stab, lam_bounds = mult
                # round-off grows with the solution size, so the tolerance does too
                tol_u = tol * max(scale, float(np.abs(u).max()) * float(np.abs(s).max()))
                if s @ u - r < -tol_u or np.any(u < -tol_u):
                    continue
                if lam_stab < -tol * scale or np.any(lam_bounds < -tol * scale):
                    continue
                return u
    raise QpInfeasible("no KKT point: QP infeasible")


def _kkt_solve(s, r, clamped, stab):
    """Solve  u = lam_s * s + sum_{i in clamped} mu_i e_i  with active rows tight."""
    k = s.size
    rows = [np.eye(k)[i] for i in clamped]
    rhs = [0.0] * len(clamped)
    if stab:
        rows.insert(0, s)
        rhs.insert(0, r)
    p = len(rows)
    if p == 0:
        return np.zeros(k), (0.0, np.zeros(0))
    A = np.array(rows)
    K = np.block([[np.eye(k), -A.T], [A, np.zeros((p, p))]])
    b = np.concatenate([np.zeros(k), rhs])
    try:
        sol = np.linalg.solve(K, b)
        for _ in range(2):  # iterative refinement; large multipliers otherwise cost digits
            sol = sol + np.linalg.solve(K, b - K @ sol)
    except np.linalg.LinAlgError:
        return None, None
    if not np.all(np.isfinite(sol)) or np.linalg.cond(K) > 1e12:
        return None, None
    u, lam = sol[:k], sol[k:]
    if stab:
        return u, (lam[0], lam[1:])
    return u, (0.0, lam)


def check_events(inst: QpInstance, u_bar, u_u: float) -> EventFlags:
    u_bar = np.asarray(u_bar, dtype=float)
    bound = bool(u_bar.size and u_bar.max() > u_u)
    return EventFlags(is_infeasible(inst), bound)


# --- symmetric inputs (u may be negative) ----------------------------------


def is_infeasible_symmetric(inst: QpInstance) -> bool:
    return bool(inst.r > 0 and inst.s @ inst.s < DENOM_EPS)


def qp_symmetric(inst: QpInstance) -> np.ndarray:
    """min 1/2 |u|^2  s.t.  s^T u >= r, with no sign constraint on u."""
    if inst.r <= 0:
        return np.zeros_like(inst.s)
    if is_infeasible_symmetric(inst):
        raise QpInfeasible("r > 0 with s = 0: the event must fire")
    return inst.s * (inst.r / (inst.s @ inst.s))


def check_events_symmetric(inst: QpInstance, u_bar, u_u: float) -> EventFlags:
    u_bar = np.asarray(u_bar, dtype=float)
    bound = bool(u_bar.size and np.abs(u_bar).max() > u_u)
    return EventFlags(is_infeasible_symmetric(inst), bound)
