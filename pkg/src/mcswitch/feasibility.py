"""Geometric constants of a channel set and the input bounds they imply.

d1 = min_{|e|=1} max_i b_i^T e
d  = min_{|e|=1} (sum of the n_a largest values of max(0, b_i^T e))

Both are computed by dense sphere sampling plus local refinement. The refined
value never exceeds the best sample, so it is the conservative figure used in
the bounds below.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (ChannelConfig, check_positive_span, default_sample_count, max_projection, polish_epigraph,
                   sphere_minimize)
from .errors import ConfigError


@dataclass(frozen=True)
class SpanConstants:
    d1: float
    d: float
    worst_direction_d1: np.ndarray
    worst_direction_d: np.ndarray
    d1_sample: float
    d_sample: float
    sample_count: int
    refinement_iterations: int
    n_a: int


def topk_clipped(config: ChannelConfig, n_a: int):
    B = config.columns

    def f(E):
        P = np.maximum(E @ B, 0.0)
        if n_a >= P.shape[1]:
            return P.sum(axis=1)
        return np.partition(P, P.shape[1] - n_a, axis=1)[:, -n_a:].sum(axis=1)

    def g(e):
        p = e @ B
        idx = np.argsort(-p, kind="stable")[:n_a]
        idx = idx[p[idx] > 0]
        return B[:, idx].sum(axis=1)

    return f, g


@lru_cache(maxsize=64)
def _cached(cols_bytes: bytes, shape: tuple, n_a: int, samples: int, seed: int, check: bool) -> SpanConstants:
    cols = np.frombuffer(cols_bytes, dtype=float).reshape(shape)
    config = ChannelConfig(cols, n_a, 1.0)
    if check and not check_positive_span(config, samples=samples, seed=seed).positive_span:
        raise ConfigError("channel columns do not positively span R^n; d and d1 are undefined")
    f1, g1 = max_projection(config)
    r1 = sphere_minimize(f1, g1, config.n, samples, seed=seed, polish=polish_epigraph(cols))
    fd, gd = topk_clipped(config, n_a)
    rd = sphere_minimize(fd, gd, config.n, samples, seed=seed, polish=polish_epigraph(cols, n_a))
    return SpanConstants(
        d1=r1.value, d=rd.value,
        worst_direction_d1=r1.direction, worst_direction_d=rd.direction,
        d1_sample=r1.sample_value, d_sample=rd.sample_value,
        sample_count=r1.sample_count,
        refinement_iterations=r1.refinement_iterations + rd.refinement_iterations,
        n_a=n_a,
    )


def compute_span_constants(config: ChannelConfig, n_a: int | None = None, samples: int | None = None,
                           seed: int = 0, check: bool = True) -> SpanConstants:
    n_a = config.n_a if n_a is None else int(n_a)
    samples = samples or default_sample_count(config.n)
    cols = np.ascontiguousarray(config.columns)
    consts = _cached(cols.tobytes(), cols.shape, n_a, samples, seed, check)
    # a sampled d can land below d1 by refinement noise only; d >= d1 holds pointwise
    if consts.d < consts.d1 - 1e-9 * max(1.0, consts.d1):
        raise AssertionError(f"d={consts.d} < d1={consts.d1}")
    return consts


def lambda_min_GGt(G: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(G @ G.T).min())


def gain_term(gains) -> float:
    if gains.order == 1:
        return float(np.linalg.eigvalsh(gains.K_q).max())
    return float(np.linalg.eigvalsh(gains.K_q + gains.K_v).max() + np.linalg.eigvalsh(gains.K_q @ gains.K_q).max())


def mu_t(err, plant, consts: SpanConstants, gains, state, ref) -> float:
    """Input bound mu(t) under which the switching MILP is feasible at this state."""
    if gains.order == 1:
        h = float(np.linalg.norm(ref.qd_dot(state.t)))
    else:
        h = float(np.linalg.norm(plant.f(state.q, state.v)) + np.linalg.norm(ref.qd_ddot(state.t)))
    num = h + gain_term(gains) * np.sqrt(2.0 * err.V)
    return float(num / (consts.d * np.sqrt(lambda_min_GGt(err.G))))


def mu_max(V0: float, h_a: float, h_b: float, plant, consts: SpanConstants, gains,
           lam_min: float | None = None, n: int | None = None) -> float:
    """Constant input bound guaranteeing feasibility at every event.

    ``h_a`` is an infinity-norm bound on the reference term; it enters as
    sqrt(n) * h_a so that it also bounds the 2-norm used in mu(t).
    ``lam_min`` defaults to lambda_min(G G^T) at q = 0, exact for plants whose
    G depends on q only through a rotation.
    """
    n = plant.n if n is None else n
    if lam_min is None:
        z = np.zeros(plant.n)
        lam_min = lambda_min_GGt(plant.G(z, z))
    h = np.sqrt(n) * h_a + (h_b if gains.order == 2 else 0.0)
    return float((h + gain_term(gains) * np.sqrt(2.0 * V0)) / (consts.d1 * np.sqrt(lam_min)))


@dataclass(frozen=True)
class FeasibilityReport:
    d1: float
    d: float
    lam_min_GGt: float
    h_a: float
    h_b: float
    h_b_skipped: int
    V0: float
    mu_max: float
    u_u: float

    @property
    def margin(self) -> float:
        return self.u_u - self.mu_max

    @property
    def premise_holds(self) -> bool:
        return self.u_u >= self.mu_max

    def lines(self) -> list[str]:
        return [
            f"d1            = {self.d1:.6g}",
            f"d (n_a)       = {self.d:.6g}",
            f"lambda_m(GGt) = {self.lam_min_GGt:.6g}",
            f"h_a           = {self.h_a:.6g}",
            f"h_b (est.)    = {self.h_b:.6g}" + (f"  ({self.h_b_skipped} guarded samples skipped)" if self.h_b_skipped else ""),
            f"V0            = {self.V0:.6g}",
            f"mu_max        = {self.mu_max:.6g}",
            f"u_u           = {self.u_u:.6g}",
            f"margin        = {self.margin:.6g} ({'premise holds' if self.premise_holds else 'premise NOT verified'})",
        ]
