"""Channel geometry: input columns, activation vectors, selection matrices and
span certificates for multi-channel systems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

RANK_RTOL = 1e-10
SPAN_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelConfig:
    """Actuation geometry of a multi-channel plant.

    ``columns`` is the n x m matrix whose i-th column is the channel vector b_i.
    At most ``n_a`` channels are active at a time, each with input in [0, u_u].
    """

    columns: np.ndarray
    n_a: int
    u_u: float
    name: str = ""

    def __post_init__(self):
        cols = np.atleast_2d(np.asarray(self.columns, dtype=float))
        if cols.ndim != 2:
            raise ValueError("columns must be an n x m matrix")
        if not np.all(np.isfinite(cols)):
            raise ValueError("channel columns must be finite")
        if np.any(np.linalg.norm(cols, axis=0) == 0.0):
            raise ValueError("every channel vector b_i must be nonzero")
        if not 1 <= int(self.n_a) <= cols.shape[1]:
            raise ValueError(f"n_a={self.n_a} must lie in [1, m={cols.shape[1]}]")
        if not self.u_u > 0:
            raise ValueError("u_u must be positive")
        object.__setattr__(self, "columns", _frozen(cols))
        object.__setattr__(self, "n_a", int(self.n_a))
        object.__setattr__(self, "u_u", float(self.u_u))

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence[float]], n_a: int, u_u: float, name: str = ""):
        return cls(np.column_stack([np.asarray(v, dtype=float) for v in vectors]), n_a, u_u, name)

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def m(self) -> int:
        return self.columns.shape[1]

    def b(self, i: int) -> np.ndarray:
        return self.columns[:, i]

    def with_(self, **changes) -> "ChannelConfig":
        kw = dict(columns=self.columns, n_a=self.n_a, u_u=self.u_u, name=self.name)
        kw.update(changes)
        return ChannelConfig(**kw)


def as_delta(delta, m: int | None = None) -> np.ndarray:
    """Validate an activation vector and return it as an int array."""
    d = np.asarray(delta)
    if d.ndim != 1:
        raise ValueError("activation vector must be one-dimensional")
    if m is not None and d.shape[0] != m:
        raise ValueError(f"activation vector has length {d.shape[0]}, expected {m}")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("activation entries must be 0 or 1")
    return d.astype(int)


def delta_from_indices(indices: Sequence[int], m: int) -> np.ndarray:
    d = np.zeros(m, dtype=int)
    d[list(indices)] = 1
    return d


def build_B(config: ChannelConfig, delta) -> np.ndarray:
    """B(delta): column i is b_i * delta_i."""
    d = as_delta(delta, config.m)
    return config.columns * d[np.newaxis, :]


def active_indices(delta) -> np.ndarray:
    return np.flatnonzero(as_delta(delta))


def selection_matrix(delta, n_a: int | None = None) -> np.ndarray:
    """Row selector E(delta), shape n_a x m.

    Row k picks the k-th active channel (in index order), so E @ u extracts the
    active sub-vector and E.T @ u_bar scatters it back.
    """
    d = as_delta(delta)
    idx = np.flatnonzero(d)
    if n_a is not None and idx.size != n_a:
        raise ValueError(f"delta activates {idx.size} channels, expected n_a={n_a}")
    E = np.zeros((idx.size, d.size))
    E[np.arange(idx.size), idx] = 1.0
    return E


def active_columns(config: ChannelConfig, delta) -> np.ndarray:
    """B_bar = B(delta) E(delta)^T, the n x n_a matrix of active columns."""
    return config.columns[:, active_indices(delta)]


def delta_num(delta) -> np.ndarray:
    """1-based indices of the active channels, in order (the plotted delta_num)."""
    return active_indices(delta) + 1


# --- sphere search ----------------------------------------------------------


def sphere_samples(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit vectors in R^n, one per row."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + np.sqrt(5.0)) * k
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass
class SphereMin:
    sample_value: float
    sample_direction: np.ndarray
    value: float
    direction: np.ndarray
    sample_count: int
    refinement_iterations: int


def sphere_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    subgradient: Callable[[np.ndarray], np.ndarray],
    n: int,
    samples: int,
    starts: int = 10,
    steps: int = 50,
    seed: int = 0,
    chunk: int = 100_000,
    polish: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SphereMin:
    """Minimize a piecewise-linear function of a unit vector.

    ``objective`` maps a (k, n) array of unit rows to k values. Dense sampling
    picks the ``starts`` lowest samples, each then refined by projected
    subgradient descent with step halving (only improving steps are kept).
    ``polish`` maps a start direction to a locally optimal one; its result is
    kept only if the objective improves.
    """
    E = sphere_samples(n, samples, seed)
    vals = np.concatenate([objective(E[i:i + chunk]) for i in range(0, E.shape[0], chunk)])
    order = np.argsort(vals, kind="stable")
    best_i = int(order[0])
    best_val, best_dir = float(vals[best_i]), E[best_i].copy()

    ref_val, ref_dir, iters = best_val, best_dir.copy(), 0
    step0 = 2 * np.pi / max(samples ** (1.0 / max(n - 1, 1)), 1.0)
    for i in order[:starts]:
        e = E[i].copy()
        f = float(vals[i])
        alpha = step0
        for _ in range(steps):
            g = subgradient(e)
            g = g - (g @ e) * e
            gn = np.linalg.norm(g)
            if gn < 1e-15:
                break
            while alpha > 1e-14:
                trial = e - alpha * g / gn
                trial /= np.linalg.norm(trial)
                ft = float(objective(trial[np.newaxis, :])[0])
                if ft < f:
                    e, f = trial, ft
                    break
                alpha *= 0.5
            iters += 1
        if polish is not None:
            e2 = polish(e)
            f2 = float(objective(e2[np.newaxis, :])[0])
            if f2 < f:
                e, f = e2, f2
        if f < ref_val:
            ref_val, ref_dir = f, e
    return SphereMin(best_val, best_dir, ref_val, ref_dir, E.shape[0], iters)


def polish_epigraph(B: np.ndarray, k: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """SLSQP polish for  min_e sum of the k largest max(0, b_i^T e)  on |e| = 1.

    Uses the epigraph form  min k t + sum s_i  s.t.  s_i >= b_i^T e - t,
    s_i >= 0, t >= 0; for k = 1 with t free this is  min t  s.t.  t >= b_i^T e.
    """
    n, m = B.shape
    clipped = k > 1

    def run(e0):
        p0 = e0 @ B
        if clipped:
            t0 = max(float(np.sort(p0)[-k]), 0.0)
            x0 = np.concatenate([e0, [t0], np.maximum(p0 - t0, 0.0)])
            obj = lambda x: k * x[n] + x[n + 1:].sum()
            jac = lambda x: np.concatenate([np.zeros(n), [float(k)], np.ones(m)])
            ineq = {"type": "ineq",
                    "fun": lambda x: np.concatenate([x[n + 1:] - x[:n] @ B + x[n], x[n:]]),
                    "jac": lambda x: np.vstack([np.hstack([-B.T, np.ones((m, 1)), np.eye(m)]),
                                                np.hstack([np.zeros((m + 1, n)), np.eye(m + 1)])])}
        else:
            x0 = np.concatenate([e0, [float(p0.max())]])
            obj = lambda x: x[n]
            jac = lambda x: np.concatenate([np.zeros(n), [1.0]])
            ineq = {"type": "ineq", "fun": lambda x: x[n] - x[:n] @ B,
                    "jac": lambda x: np.hstack([-B.T, np.ones((m, 1))])}
        eq = {"type": "eq", "fun": lambda x: np.array([x[:n] @ x[:n] - 1.0]),
              "jac": lambda x: np.concatenate([2 * x[:n], np.zeros(x.size - n)])[np.newaxis, :]}
        res = minimize(obj, x0, jac=jac, constraints=[ineq, eq], method="SLSQP",
                       options={"maxiter": 200, "ftol": 1e-14})
        e = res.x[:n]
        nrm = np.linalg.norm(e)
        return e / nrm if nrm > 0 and np.all(np.isfinite(e)) else e0

    return run


def default_sample_count(n: int) -> int:
    return 100_000 if n <= 3 else 1_000_000


# --- span checks ------------------------------------------------------------


def check_linear_span(config: ChannelConfig) -> bool:
    s = np.linalg.svd(config.columns, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > RANK_RTOL * s[0])) == config.n


@dataclass(frozen=True)
class SpanCertificate:
    positive_span: bool
    witness: np.ndarray
    min_max_projection: float
    linear_span: bool
    sample_count: int = field(default=0)


def max_projection(config: ChannelConfig) -> tuple[Callable, Callable]:
    """F(e) = max_i b_i^T e, vectorized, with a subgradient."""
    B = config.columns

    def f(E):
        return (E @ B).max(axis=1)

    def g(e):
        return B[:, int(np.argmax(e @ B))]

    return f, g


def check_positive_span(config: ChannelConfig, samples: int | None = None, seed: int = 0) -> SpanCertificate:
    """Sampling certificate that the channel columns positively span R^n.

    The columns positively span R^n iff every direction e has some b_i with
    b_i^T e > 0. We minimize max_i b_i^T e over the sphere; the witness is the
    worst direction found.
    """
    n = config.n
    samples = samples or default_sample_count(n)
    f, g = max_projection(config)
    res = sphere_minimize(f, g, n, samples, seed=seed, polish=polish_epigraph(config.columns))
    lin = check_linear_span(config)
    scale = float(np.linalg.norm(config.columns, axis=0).max())
    ok = lin and res.value > SPAN_TOL * scale
    return SpanCertificate(ok, res.direction, res.value, lin, res.sample_count)


# --- presets ----------------------------------------------------------------


def square8_columns(l: float) -> np.ndarray:
    """Eight contact channels of the planar square, q = [x, y, theta]."""
    return np.array(
        [
            [0, 1, -l], [0, 1, l],
            [-1, 0, -l], [-1, 0, l],
            [0, -1, -l], [0, -1, l],
            [1, 0, -l], [1, 0, l],
        ],
        dtype=float,
    ).T


def cube24_geometry(l: float, half_side: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Four inward thrusters per face, at in-face offsets (+-l, +-l).

    Returns (columns 6 x 24, contact points 24 x 3, force directions 24 x 3),
    all in the body frame. Faces ordered +x, -x, +y, -y, +z, -z.
    """
    cols, points, forces = [], [], []
    for axis in range(3):
        for sign in (1.0, -1.0):
            normal = np.zeros(3)
            normal[axis] = sign
            t1 = np.zeros(3)
            t2 = np.zeros(3)
            t1[(axis + 1) % 3] = 1.0
            t2[(axis + 2) % 3] = 1.0
            for o1, o2 in ((-l, -l), (l, -l), (l, l), (-l, l)):
                p = half_side * normal + o1 * t1 + o2 * t2
                fdir = -normal
                cols.append(np.concatenate([fdir, np.cross(p, fdir)]))
                points.append(p)
                forces.append(fdir)
    return np.array(cols).T, np.array(points), np.array(forces)


def axes2d_columns() -> np.ndarray:
    return np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).T


def preset(name: str, n_a: int, u_u: float, l: float = 0.3) -> ChannelConfig:
    if name == "square8":
        cols = square8_columns(l)
    elif name == "cube24":
        cols = cube24_geometry(l)[0]
    elif name == "axes2d":
        cols = axes2d_columns()
    else:
        raise ValueError(f"unknown channel preset {name!r}")
    return ChannelConfig(cols, n_a, u_u, name)
