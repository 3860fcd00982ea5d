"""Plant models and fixed-step integration.

Second-order plants follow  q'' = f(q, v) + G(q, v) B(delta) u;
the quasi-static pusher follows  q' = G(q) B(delta) u.
Inputs are held constant (zero-order hold) across each integration step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import ChannelConfig, as_delta, cube24_geometry, square8_columns
from .errors import ConfigError, NumericalFailure

EULER_GUARD = np.deg2rad(85.0)


@dataclass(frozen=True)
class PlantState:
    q: np.ndarray
    v: Optional[np.ndarray] = None
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        if self.v is not None:
            object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True)
class SecondOrderPlant:
    f_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    G_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    config: ChannelConfig
    name: str = "generic"
    params: dict = field(default_factory=dict)
    guard: Optional[Callable[[np.ndarray], None]] = None

    order = 2

    @property
    def n(self) -> int:
        return self.config.n

    def f(self, q, v) -> np.ndarray:
        return np.asarray(self.f_fn(q, v), dtype=float)

    def G(self, q, v=None) -> np.ndarray:
        return np.asarray(self.G_fn(q, v), dtype=float)

    def with_config(self, config: ChannelConfig) -> "SecondOrderPlant":
        return replace(self, config=config)


@dataclass(frozen=True)
class QuasiStaticPlant:
    """Planar object pushed quasi-statically on a frictional surface.

    d_f = mu * m * g resists translation, d_tau = c * r * mu * m * g rotation.
    """

    d_f: float
    d_tau: float
    config: ChannelConfig
    half_side: float = 0.5
    name: str = "pusher"

    order = 1

    def __post_init__(self):
        if not (self.d_f > 0 and self.d_tau > 0):
            raise ConfigError("friction scalars d_f, d_tau must be positive")
        if self.config.n != 3:
            raise ConfigError("quasi-static pusher is planar (n = 3)")

    @property
    def n(self) -> int:
        return 3

    def G(self, q, v=None) -> np.ndarray:
        th = q[2]
        c, s = np.cos(th), np.sin(th)
        return np.array(
            [[c / self.d_f, -s / self.d_f, 0.0], [s / self.d_f, c / self.d_f, 0.0], [0.0, 0.0, 1.0 / self.d_tau]]
        )

    def f(self, q, v=None) -> np.ndarray:
        return np.zeros(3)

    def with_config(self, config: ChannelConfig) -> "QuasiStaticPlant":
        return replace(self, config=config)


def _check_input(plant, u, delta, symmetric=False):
    u = np.asarray(u, dtype=float)
    if u.shape != (plant.config.m,):
        raise ValueError(f"input has shape {u.shape}, expected ({plant.config.m},)")
    if not np.all(np.isfinite(u)):
        raise NumericalFailure("non-finite input")
    lo = -plant.config.u_u * (1 + 1e-12) if symmetric else -1e-12
    if np.any(u < lo) or np.any(u > plant.config.u_u * (1 + 1e-12)):
        warnings.warn("input outside its bounds", RuntimeWarning, stacklevel=3)
    return u, as_delta(delta, plant.config.m)


def accel(plant: SecondOrderPlant, state: PlantState, delta, u) -> np.ndarray:
    u, d = _check_input(plant, u, delta)
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.v))):
        raise NumericalFailure("non-finite state")
    return plant.f(state.q, state.v) + plant.G(state.q, state.v) @ (plant.config.columns @ (d * u))


def qs_velocity(plant: QuasiStaticPlant, state: PlantState, delta, u) -> np.ndarray:
    u, d = _check_input(plant, u, delta)
    if not np.all(np.isfinite(state.q)):
        raise NumericalFailure("non-finite state")
    return plant.G(state.q) @ (plant.config.columns @ (d * u))


def _rk4(fun, x, dt):
    k1 = fun(x)
    k2 = fun(x + 0.5 * dt * k1)
    k3 = fun(x + 0.5 * dt * k2)
    k4 = fun(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler(fun, x, dt):
    return x + dt * fun(x)


INTEGRATORS = {"rk4": _rk4, "euler": _euler}


def step(plant, state: PlantState, delta, u, dt: float, method: str = "rk4", t_next: float | None = None,
         symmetric: bool = False) -> PlantState:
    """Advance one fixed step holding (delta, u) constant.

    ``t_next`` lets callers pin the new time to k*dt instead of accumulating.
    ``symmetric`` admits inputs in [-u_u, u_u].
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    integrate = INTEGRATORS[method]
    u, d = _check_input(plant, u, delta, symmetric)
    wrench = plant.config.columns @ (d * u)
    n = plant.n
    t_new = state.t + dt if t_next is None else t_next

    if plant.order == 1:
        q = integrate(lambda x: plant.G(x) @ wrench, state.q, dt)
        new = PlantState(q, None, t_new)
    else:
        def field_(x):
            q, v = x[:n], x[n:]
            return np.concatenate([v, plant.f(q, v) + plant.G(q, v) @ wrench])

        x = integrate(field_, np.concatenate([state.q, state.v]), dt)
        new = PlantState(x[:n], x[n:], t_new)

    if not np.all(np.isfinite(new.q)) or (new.v is not None and not np.all(np.isfinite(new.v))):
        raise NumericalFailure(f"integrator produced a non-finite state at t={t_new:.6g}")
    guard = getattr(plant, "guard", None)
    if guard is not None:
        guard(new.q)
    return new


# --- concrete plants --------------------------------------------------------


def rot2(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


def square_plant(m_obj: float = 1.0, J: float = 0.1, l: float = 0.3, config: ChannelConfig | None = None,
                 n_a: int = 1, u_u: float = 3.0) -> SecondOrderPlant:
    """Planar free-flyer with eight body-fixed thrust channels."""
    if min(m_obj, J, l) <= 0:
        raise ConfigError("m_obj, J and l must be positive")
    if config is None:
        config = ChannelConfig(square8_columns(l), n_a, u_u, "square8")
    if config.m != 8 or config.n != 3:
        raise ConfigError(f"square plant needs 8 channels in R^3, got {config.m} in R^{config.n}")
    minv = np.array([1.0 / m_obj, 1.0 / m_obj, 1.0 / J])

    def G(q, v=None):
        out = np.zeros((3, 3))
        out[:2, :2] = rot2(q[2])
        out[2, 2] = 1.0
        return minv[:, None] * out

    def f(q, v):
        return np.zeros(3)

    return SecondOrderPlant(f, G, config, "square", {"m_obj": m_obj, "J": J, "l": l})


def euler_zyx_R(eta) -> np.ndarray:
    """Body-to-world rotation for ZYX Euler angles eta = [roll, pitch, yaw]."""
    ph, th, ps = eta
    cph, sph = np.cos(ph), np.sin(ph)
    cth, sth = np.cos(th), np.sin(th)
    cps, sps = np.cos(ps), np.sin(ps)
    return np.array(
        [
            [cps * cth, cps * sth * sph - sps * cph, cps * sth * cph + sps * sph],
            [sps * cth, sps * sth * sph + cps * cph, sps * sth * cph - cps * sph],
            [-sth, cth * sph, cth * cph],
        ]
    )


def euler_rate_Q(eta) -> np.ndarray:
    """Q with body angular velocity omega = Q @ eta_dot."""
    ph, th = eta[0], eta[1]
    cph, sph = np.cos(ph), np.sin(ph)
    cth, sth = np.cos(th), np.sin(th)
    return np.array([[1.0, 0.0, -sth], [0.0, cph, sph * cth], [0.0, -sph, cph * cth]])


def euler_rate_Qdot(eta, eta_dot) -> np.ndarray:
    ph, th = eta[0], eta[1]
    dph, dth = eta_dot[0], eta_dot[1]
    cph, sph = np.cos(ph), np.sin(ph)
    cth, sth = np.cos(th), np.sin(th)
    dQ_dph = np.array([[0.0, 0.0, 0.0], [0.0, -sph, cph * cth], [0.0, -cph, -sph * cth]])
    dQ_dth = np.array([[0.0, 0.0, -cth], [0.0, 0.0, -sph * sth], [0.0, 0.0, -cph * sth]])
    return dQ_dph * dph + dQ_dth * dth


def hat(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _euler_guard(q):
    if abs(q[4]) >= EULER_GUARD:
        raise NumericalFailure(f"Euler pitch {np.rad2deg(q[4]):.2f} deg reached the singularity guard (85 deg)")


def cube_plant(m_obj: float = 1.0, J=None, l: float = 0.3, half_side: float = 0.5,
               config: ChannelConfig | None = None, n_a: int = 1, u_u: float = 3.0) -> SecondOrderPlant:
    """Free-floating cube, q = [position; ZYX Euler angles], 24 thrust channels.

    Rotational part: J w' = -w x J w + tau with w = Q(eta) eta'. Solving for
    eta'' gives f = Q^-1 (-J^-1 (w x J w) - Q' eta') and the torque gain Q^-1 J^-1.
    """
    J = np.diag([0.1, 0.1, 0.1]) if J is None else np.asarray(J, dtype=float)
    if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
        raise ConfigError("cube inertia must be symmetric positive definite")
    if m_obj <= 0 or l <= 0:
        raise ConfigError("m_obj and l must be positive")
    if config is None:
        config = ChannelConfig(cube24_geometry(l, half_side)[0], n_a, u_u, "cube24")
    if config.m != 24 or config.n != 6:
        raise ConfigError(f"cube plant needs 24 channels in R^6, got {config.m} in R^{config.n}")
    Jinv = np.linalg.inv(J)

    def f(q, v):
        eta, eta_dot = q[3:], v[3:]
        Q = euler_rate_Q(eta)
        w = Q @ eta_dot
        rhs = -Jinv @ np.cross(w, J @ w) - euler_rate_Qdot(eta, eta_dot) @ eta_dot
        return np.concatenate([np.zeros(3), np.linalg.solve(Q, rhs)])

    def G(q, v=None):
        eta = q[3:]
        out = np.zeros((6, 6))
        out[:3, :3] = euler_zyx_R(eta) / m_obj
        out[3:, 3:] = np.linalg.solve(euler_rate_Q(eta), Jinv)
        return out

    return SecondOrderPlant(f, G, config, "cube", {"m_obj": m_obj, "J": J, "l": l, "half_side": half_side},
                            guard=_euler_guard)


def pusher_plant(m_obj: float = 10.0, mu: float = 0.1, g: float = 9.81, c: float = 0.6,
                 half_side: float = 0.5, r: float | None = None, l: float = 0.3,
                 config: ChannelConfig | None = None, n_a: int = 2, u_u: float = 10.0) -> QuasiStaticPlant:
    """Quasi-static square pusher; r defaults to the half-diagonal."""
    if not 0.0 <= c <= 1.0:
        raise ConfigError("geometry constant c must lie in [0, 1]")
    if l > half_side:
        raise ConfigError("contact offset l must not exceed the half side")
    r = half_side * np.sqrt(2.0) if r is None else r
    d_f = mu * m_obj * g
    if config is None:
        config = ChannelConfig(square8_columns(l), n_a, u_u, "square8")
    return QuasiStaticPlant(d_f, c * r * d_f, config, half_side)


def point_plant(config: ChannelConfig, m_obj: float = 1.0) -> SecondOrderPlant:
    """Unrotated point mass in R^n driven directly by the channel wrench: q'' = B u / m."""
    if m_obj <= 0:
        raise ConfigError("m_obj must be positive")
    n = config.n
    G0 = np.eye(n) / m_obj
    return SecondOrderPlant(lambda q, v: np.zeros(n), lambda q, v=None: G0, config, "point", {"m_obj": m_obj})
