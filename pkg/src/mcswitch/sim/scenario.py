"""Scenario files (TOML) and their validated in-memory form.

Sections:

    [plant]      kind = "square" | "cube" | "pusher" | "point", physical parameters
    [channels]   preset = "square8" | "cube24" | "axes2d" or columns = [[b_1], ...];
                 n_a, u_u, l (moment arm for presets)
    [gains]      K_q, K_v (scalar, diagonal list or matrix); c_d or c_d_ratio
    [reference]  kind = "setpoint" (q_d) | "sinusoid" (center, amplitude, omega, phase)
    [sim]        dt, duration, q0, v0, solver, symmetric, integrator, seed, h_b_samples
    [fleet]      positions = [[x, y], ...], speed, radius          (manipulation only)
    [grid]       cell, extent, no_delay                            (manipulation only)
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core import ChannelConfig, axes2d_columns, cube24_geometry, square8_columns
from ..dynamics import cube_plant, point_plant, pusher_plant, square_plant
from ..errors import ConfigError
from ..feasibility import FeasibilityReport, compute_span_constants, lambda_min_GGt, mu_max
from ..lyapunov import ControllerGains, ReferenceTrajectory, estimate_h_b, setpoint, sinusoid

SECTIONS = {"plant", "channels", "gains", "reference", "sim", "fleet", "grid", "name", "description"}
PLANT_KEYS = {
    "square": {"kind", "m_obj", "J"},
    "cube": {"kind", "m_obj", "J", "half_side"},
    "pusher": {"kind", "m_obj", "mu", "g", "c", "half_side", "r"},
    "point": {"kind", "m_obj"},
}


@dataclass(frozen=True)
class FleetSpec:
    positions: np.ndarray
    speed: float = 0.5
    radius: float = 0.1


@dataclass(frozen=True)
class GridSpec:
    cell: float = 0.05
    extent: tuple = (-2.0, 3.0, -2.0, 3.0)
    no_delay: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: Any
    ref: ReferenceTrajectory
    gains: ControllerGains
    q0: np.ndarray
    v0: Optional[np.ndarray]
    dt: float
    duration: float
    solver: str = "exact"
    symmetric: bool = False
    integrator: str = "rk4"
    seed: int = 0
    h_b_samples: int = 20_000
    fleet: Optional[FleetSpec] = None
    grid: Optional[GridSpec] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()[:16]

    @property
    def config(self) -> ChannelConfig:
        return self.plant.config

    def with_na(self, n_a: int) -> "Scenario":
        raw = json.loads(json.dumps(self.raw, default=str))
        raw.setdefault("channels", {})["n_a"] = int(n_a)
        return replace(self, plant=self.plant.with_config(self.config.with_(n_a=int(n_a))), raw=raw)

    def with_(self, **changes) -> "Scenario":
        raw = json.loads(json.dumps(self.raw, default=str))
        raw.setdefault("overrides", {}).update({k: str(v) for k, v in changes.items()})
        return replace(self, raw=raw, **changes)


# --- parsing helpers ----------------------------------------------------------


def _matrix(x, n: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1:
        if a.size != n:
            raise ConfigError(f"{name}: diagonal has {a.size} entries, expected {n}")
        return np.diag(a)
    if a.shape != (n, n):
        raise ConfigError(f"{name}: matrix shape {a.shape}, expected ({n}, {n})")
    return a


def _vector(x, n: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    if a.shape != (n,):
        raise ConfigError(f"{name}: expected {n} entries, got shape {a.shape}")
    return a


def _positive(d: dict, key: str, default=None) -> float:
    val = d.get(key, default)
    if val is None:
        raise ConfigError(f"missing required key {key!r}")
    val = float(val)
    if not (val > 0 and math.isfinite(val)):
        raise ConfigError(f"{key} must be positive and finite, got {val}")
    return val


def _check_keys(section: str, d: dict, allowed: set):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"[{section}] has unknown keys: {sorted(extra)}")


# --- construction -----------------------------------------------------------


def _channels(ch: dict, plant_kind: str) -> ChannelConfig:
    _check_keys("channels", ch, {"preset", "columns", "n_a", "u_u", "l", "half_side"})
    if "n_a" not in ch or "u_u" not in ch:
        raise ConfigError("[channels] needs n_a and u_u")
    n_a = int(ch["n_a"])
    u_u = _positive(ch, "u_u")
    if "columns" in ch:
        if "preset" in ch:
            raise ConfigError("[channels] takes either preset or columns, not both")
        cols = np.asarray(ch["columns"], dtype=float)
        if cols.ndim != 2:
            raise ConfigError("[channels] columns must be a list of channel vectors")
        cols, name = cols.T, "custom"
    else:
        name = ch.get("preset", {"square": "square8", "pusher": "square8", "cube": "cube24"}.get(plant_kind))
        l = _positive(ch, "l", 0.3)
        if name == "square8":
            cols = square8_columns(l)
        elif name == "cube24":
            cols = cube24_geometry(l, ch.get("half_side", 0.5))[0]
        elif name == "axes2d":
            cols = axes2d_columns()
        else:
            raise ConfigError(f"unknown channel preset {name!r}")
    try:
        return ChannelConfig(cols, n_a, u_u, name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _plant(pl: dict, config: ChannelConfig, l: float):
    kind = pl.get("kind")
    if kind not in PLANT_KEYS:
        raise ConfigError(f"[plant] kind must be one of {sorted(PLANT_KEYS)}, got {kind!r}")
    _check_keys("plant", pl, PLANT_KEYS[kind])
    if kind == "square":
        return square_plant(_positive(pl, "m_obj", 1.0), _positive(pl, "J", 0.1), l, config)
    if kind == "cube":
        J = pl.get("J", 0.1)
        J = _matrix(J, 3, "J")
        return cube_plant(_positive(pl, "m_obj", 1.0), J, l, pl.get("half_side", 0.5), config)
    if kind == "pusher":
        r = pl.get("r")
        return pusher_plant(_positive(pl, "m_obj", 10.0), _positive(pl, "mu", 0.1), _positive(pl, "g", 9.81),
                            float(pl.get("c", 0.6)), _positive(pl, "half_side", 0.5),
                            None if r is None else _positive(pl, "r"), l, config)
    return point_plant(config, _positive(pl, "m_obj", 1.0))


def _gains(g: dict, n: int, order: int) -> ControllerGains:
    _check_keys("gains", g, {"K_q", "K_v", "c_d", "c_d_ratio"})
    if "K_q" not in g:
        raise ConfigError("[gains] needs K_q")
    K_q = _matrix(g["K_q"], n, "K_q")
    c_d = g.get("c_d")
    ratio = float(g.get("c_d_ratio", 0.5))
    try:
        if order == 1:
            if "K_v" in g:
                raise ConfigError("[gains] K_v is meaningless for a quasi-static plant")
            return ControllerGains.quasi_static(K_q, c_d, ratio)
        if "K_v" not in g:
            raise ConfigError("[gains] needs K_v for a second-order plant")
        return ControllerGains.second_order(K_q, _matrix(g["K_v"], n, "K_v"), c_d, ratio)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _reference(r: dict, n: int) -> ReferenceTrajectory:
    kind = r.get("kind", "setpoint")
    if kind == "setpoint":
        _check_keys("reference", r, {"kind", "q_d"})
        return setpoint(_vector(r.get("q_d", 0.0), n, "q_d"))
    if kind == "sinusoid":
        _check_keys("reference", r, {"kind", "center", "amplitude", "omega", "phase"})
        return sinusoid(_vector(r.get("center", 0.0), n, "center"), _vector(r.get("amplitude", 0.0), n, "amplitude"),
                        float(r.get("omega", 1.0)), _vector(r.get("phase", 0.0), n, "phase"))
    raise ConfigError(f"[reference] kind must be 'setpoint' or 'sinusoid', got {kind!r}")


def from_dict(raw: dict, name: str = "scenario") -> Scenario:
    _check_keys("top level", raw, SECTIONS)
    for sec in ("plant", "channels", "gains", "sim"):
        if sec not in raw:
            raise ConfigError(f"missing section [{sec}]")
    pl, ch = raw["plant"], raw["channels"]
    config = _channels(ch, pl.get("kind", ""))
    l = float(ch.get("l", 0.3))
    plant = _plant(pl, config, l)
    n = plant.n
    gains = _gains(raw["gains"], n, plant.order)
    ref = _reference(raw.get("reference", {}), n)
    sm = raw["sim"]
    _check_keys("sim", sm, {"dt", "duration", "q0", "v0", "solver", "symmetric", "integrator", "seed", "h_b_samples"})
    default_dt = 0.005 if plant.order == 1 else 0.001
    dt = _positive(sm, "dt", default_dt)
    duration = _positive(sm, "duration", 10.0)
    if dt > duration:
        raise ConfigError("dt exceeds duration")
    solver = sm.get("solver", "exact")
    if solver not in ("exact", "bigM", "brute"):
        raise ConfigError(f"[sim] solver must be exact, bigM or brute, got {solver!r}")
    integrator = sm.get("integrator", "rk4")
    if integrator not in ("rk4", "euler"):
        raise ConfigError(f"[sim] integrator must be rk4 or euler, got {integrator!r}")
    q0 = _vector(sm.get("q0", 0.0), n, "q0")
    v0 = None if plant.order == 1 else _vector(sm.get("v0", 0.0), n, "v0")
    fleet = grid = None
    if "fleet" in raw:
        fl = raw["fleet"]
        _check_keys("fleet", fl, {"positions", "speed", "radius"})
        pos = np.asarray(fl.get("positions", []), dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ConfigError("[fleet] positions must be a list of [x, y] points")
        if pos.shape[0] != config.n_a:
            raise ConfigError(f"[fleet] has {pos.shape[0]} robots but n_a = {config.n_a}")
        fleet = FleetSpec(pos, _positive(fl, "speed", 0.5), _positive(fl, "radius", 0.1))
    if "grid" in raw:
        gr = raw["grid"]
        _check_keys("grid", gr, {"cell", "extent", "no_delay"})
        ext = tuple(float(x) for x in gr.get("extent", (-2.0, 3.0, -2.0, 3.0)))
        if len(ext) != 4 or ext[1] <= ext[0] or ext[3] <= ext[2]:
            raise ConfigError("[grid] extent must be [xmin, xmax, ymin, ymax]")
        grid = GridSpec(_positive(gr, "cell", 0.05), ext, bool(gr.get("no_delay", False)))
    if (fleet is not None or grid is not None) and plant.order != 1:
        raise ConfigError("[fleet] and [grid] apply to the quasi-static pusher only")
    symmetric = bool(sm.get("symmetric", False))
    return Scenario(
        name=str(raw.get("name", name)), plant=plant, ref=ref, gains=gains, q0=q0, v0=v0, dt=dt,
        duration=duration, solver=solver, symmetric=symmetric, integrator=integrator,
        seed=int(sm.get("seed", 0)), h_b_samples=int(sm.get("h_b_samples", 20_000)),
        fleet=fleet, grid=grid, raw=raw,
    )


def load(path) -> Scenario:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return from_dict(raw, path.stem)


# --- feasibility report -------------------------------------------------------


def initial_V(scenario: Scenario) -> float:
    from ..dynamics import PlantState
    from ..lyapunov import error_state

    state = PlantState(scenario.q0, scenario.v0, 0.0)
    return error_state(state, scenario.ref, scenario.gains, scenario.plant).V


def feasibility(scenario: Scenario, samples: int | None = None) -> FeasibilityReport:
    """Constants, the constant input bound mu_max and the u_u margin.

    lambda_min(G G^T) is the minimum over q = 0 and the states sampled for h_b,
    which covers plants whose G varies with more than a planar rotation.
    """
    plant, gains, ref = scenario.plant, scenario.gains, scenario.ref
    consts = compute_span_constants(plant.config, samples=samples)
    V0 = initial_V(scenario)
    h_a = ref.h_v if gains.order == 1 else ref.h_a
    h_b, skipped = estimate_h_b(plant, ref, gains, V0, samples=scenario.h_b_samples, seed=scenario.seed)
    lam = _lam_min_sampled(scenario, V0)
    mm = mu_max(V0, h_a, h_b, plant, consts, gains, lam_min=lam)
    return FeasibilityReport(consts.d1, consts.d, lam, h_a, h_b, skipped, V0, mm, plant.config.u_u)


def _lam_min_sampled(scenario: Scenario, V0: float, samples: int = 2000) -> float:
    plant = scenario.plant
    z = np.zeros(plant.n)
    lam = lambda_min_GGt(plant.G(z, z))
    if plant.name not in ("cube",):
        return lam
    rng = np.random.default_rng(scenario.seed)
    radius = math.sqrt(2.0 * V0)
    guard = getattr(plant, "guard", None)
    from ..errors import NumericalFailure

    for _ in range(samples):
        e = rng.standard_normal(plant.n)
        e *= radius * rng.random() ** (1.0 / plant.n) / np.linalg.norm(e)
        q = scenario.ref.q_d(rng.random() * scenario.duration) - e
        if guard is not None:
            try:
                guard(q)
            except NumericalFailure:
                continue
        lam = min(lam, lambda_min_GGt(plant.G(q, z)))
    return lam
