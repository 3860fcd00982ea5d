"""Tracking errors, the backstepping torque, the Lyapunov function and the
scalar/vector terms (s_b, r) consumed by the switching MILP and the QP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ChannelConfig, active_columns
from .errors import NumericalFailure


@dataclass(frozen=True)
class ReferenceTrajectory:
    q_d_fn: Callable[[float], np.ndarray]
    qd_dot_fn: Callable[[float], np.ndarray]
    qd_ddot_fn: Callable[[float], np.ndarray]
    h_a: float
    kind: str = "custom"
    h_v: float = 0.0

    def q_d(self, t):
        return np.asarray(self.q_d_fn(t), dtype=float)

    def qd_dot(self, t):
        return np.asarray(self.qd_dot_fn(t), dtype=float)

    def qd_ddot(self, t):
        return np.asarray(self.qd_ddot_fn(t), dtype=float)


def setpoint(q_d) -> ReferenceTrajectory:
    q_d = np.asarray(q_d, dtype=float)
    zero = np.zeros_like(q_d)
    return ReferenceTrajectory(lambda t: q_d, lambda t: zero, lambda t: zero, 0.0, "setpoint")


def sinusoid(center, amplitude, omega: float, phase=0.0) -> ReferenceTrajectory:
    """q_d(t) = center + amplitude * sin(omega t + phase), elementwise.

    h_a bounds the second derivative and h_v the first (the quasi-static
    counterpart).
    """
    c = np.asarray(center, dtype=float)
    a = np.asarray(amplitude, dtype=float) * np.ones_like(c)
    ph = np.asarray(phase, dtype=float) * np.ones_like(c)
    return ReferenceTrajectory(
        lambda t: c + a * np.sin(omega * t + ph),
        lambda t: a * omega * np.cos(omega * t + ph),
        lambda t: -a * omega**2 * np.sin(omega * t + ph),
        float(np.max(np.abs(a)) * omega**2),
        "sinusoid",
        float(np.max(np.abs(a)) * abs(omega)),
    )


@dataclass(frozen=True)
class ControllerGains:
    K_q: np.ndarray
    K_v: Optional[np.ndarray]
    c: float
    c_d: float

    @property
    def order(self) -> int:
        return 1 if self.K_v is None else 2

    @classmethod
    def second_order(cls, K_q, K_v, c_d: float | None = None, c_d_ratio: float = 0.5) -> "ControllerGains":
        K_q = _spd(K_q, "K_q")
        K_v = _spd(K_v, "K_v")
        c = min(2 * np.linalg.eigvalsh(K_q).min() - 1, 2 * np.linalg.eigvalsh(K_v).min() - 1)
        if c <= 0:
            raise ValueError("K_q and K_v must exceed I/2 so that c > 0")
        return cls(K_q, K_v, float(c), _decay(c, c_d, c_d_ratio))

    @classmethod
    def quasi_static(cls, K_q, c_d: float | None = None, c_d_ratio: float = 0.5) -> "ControllerGains":
        K_q = _spd(K_q, "K_q")
        c = 2 * float(np.linalg.eigvalsh(K_q).min())
        return cls(K_q, None, c, _decay(c, c_d, c_d_ratio))


def _spd(K, name):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1] or not np.allclose(K, K.T):
        raise ValueError(f"{name} must be a symmetric square matrix")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return K


def _decay(c, c_d, ratio):
    c_d = ratio * c if c_d is None else float(c_d)
    if not 0 < c_d < c:
        raise ValueError(f"c_d={c_d} must lie in (0, c={c})")
    return float(c_d)


@dataclass(frozen=True)
class ErrorState:
    e_q: np.ndarray
    e_v: Optional[np.ndarray]
    V: float
    s_b: np.ndarray
    r: float
    tau: np.ndarray
    v_d: Optional[np.ndarray]
    G: np.ndarray


def _G_checked(plant, q, v):
    G = plant.G(q, v)
    if not np.all(np.isfinite(G)) or abs(np.linalg.det(G)) < 1e-300:
        raise NumericalFailure("G(q, v) is singular")
    return G


def backstepping_tau(state, ref: ReferenceTrajectory, gains: ControllerGains, plant) -> np.ndarray:
    return error_state(state, ref, gains, plant).tau


def error_state(state, ref: ReferenceTrajectory, gains: ControllerGains, plant) -> ErrorState:
    t, q = state.t, state.q
    e_q = ref.q_d(t) - q
    if gains.order == 1:
        G = _G_checked(plant, q, None)
        tau = np.linalg.solve(G, ref.qd_dot(t) + gains.K_q @ e_q)
        V = 0.5 * float(e_q @ e_q)
        s_b = G.T @ e_q
        r = -(gains.c - gains.c_d) * V + float(e_q @ (G @ tau))
        return ErrorState(e_q, None, V, s_b, r, tau, None, G)

    v = state.v
    G = _G_checked(plant, q, v)
    v_d = ref.qd_dot(t) + gains.K_q @ e_q
    e_v = v_d - v
    e_q_dot = -gains.K_q @ e_q + e_v
    v_d_dot = ref.qd_ddot(t) + gains.K_q @ e_q_dot
    tau = np.linalg.solve(G, -plant.f(q, v) + v_d_dot + gains.K_v @ e_v)
    V = 0.5 * float(e_q @ e_q + e_v @ e_v)
    s_b = G.T @ e_v
    r = -(gains.c - gains.c_d) * V + float(e_v @ (G @ tau))
    return ErrorState(e_q, e_v, V, s_b, r, tau, v_d, G)


def active_s(err: ErrorState, config: ChannelConfig, delta) -> np.ndarray:
    """s = B_bar^T s_b: one entry per active channel, in index order."""
    return active_columns(config, delta).T @ err.s_b


def vdot(err: ErrorState, gains: ControllerGains, config: ChannelConfig, delta, u) -> float:
    """Exact dV/dt of the closed loop for the input (delta, u)."""
    wrench = config.columns @ (np.asarray(delta) * np.asarray(u, dtype=float))
    if gains.order == 1:
        return float(-err.e_q @ gains.K_q @ err.e_q + err.e_q @ err.G @ (err.tau - wrench))
    return float(
        -err.e_q @ gains.K_q @ err.e_q
        + err.e_q @ err.e_v
        - err.e_v @ gains.K_v @ err.e_v
        + err.e_v @ err.G @ (err.tau - wrench)
    )


def vdot_bound(err: ErrorState, gains: ControllerGains, config: ChannelConfig, delta, u) -> float:
    """Upper bound -cV + e^T G (tau - B(delta) u) enforced by the controllers."""
    wrench = config.columns @ (np.asarray(delta) * np.asarray(u, dtype=float))
    e = err.e_q if gains.order == 1 else err.e_v
    return float(-gains.c * err.V + e @ err.G @ (err.tau - wrench))


def estimate_h_b(plant, ref: ReferenceTrajectory, gains: ControllerGains, V0: float,
                 samples: int = 20_000, horizon: float = 10.0, seed: int = 0) -> tuple[float, int]:
    """Sampled estimate of max ||f(q, v)|| over the sublevel set V <= V0.

    Samples failing the plant guard (e.g. Euler singularity) are skipped; their
    count is returned alongside the estimate. This is a lower estimate of the
    true supremum, not a bound.
    """
    if gains.order == 1:
        return 0.0, 0
    n = plant.n
    rng = np.random.default_rng(seed)
    radius = np.sqrt(2.0 * V0)
    best, skipped = 0.0, 0
    guard = getattr(plant, "guard", None)
    for _ in range(samples):
        x = rng.standard_normal(2 * n)
        x *= radius * rng.random() ** (1.0 / (2 * n)) / np.linalg.norm(x)
        e_q, e_v = x[:n], x[n:]
        t = rng.random() * horizon
        q = ref.q_d(t) - e_q
        v = ref.qd_dot(t) + gains.K_q @ e_q - e_v
        if guard is not None:
            try:
                guard(q)
            except NumericalFailure:
                skipped += 1
                continue
        best = max(best, float(np.linalg.norm(plant.f(q, v))))
    return best, skipped
