"""Simulation trace: one row per time step, CSV persistence and SVG plots.

Row k holds the state at t_k and the input held over [t_k, t_k + dt).
CSV schema (header row, one column per vector entry):

    t, q_1..q_n, v_1..v_n, e_q_1..e_q_n, e_v_1..e_v_n, V, V_d,
    u_1..u_m, delta_1..delta_m, delta_num, rho, event,
    infeasibility_flag, bound_flag, mode

``v`` and ``e_v`` columns are empty for first-order plants, ``rho`` is empty
on rows without a switch, ``delta_num`` lists the 1-based active channel
indices separated by spaces. Floats use the shortest repr that round-trips.
Metadata goes to a JSON sidecar ``<stem>.meta.json``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MODES = ("manipulate", "navigate")


@dataclass
class SimTrace:
    t: np.ndarray
    q: np.ndarray
    v: Optional[np.ndarray]
    e_q: np.ndarray
    e_v: Optional[np.ndarray]
    V: np.ndarray
    V_d: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    event: np.ndarray
    infeasibility_flag: np.ndarray
    bound_flag: np.ndarray
    mode: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def event_times(self) -> np.ndarray:
        return self.t[self.event]

    def post_init_event_times(self) -> np.ndarray:
        """Event times excluding the initial channel selection at t = 0."""
        idx = np.flatnonzero(self.event)
        return self.t[idx[idx > 0]]

    def event_gaps(self) -> np.ndarray:
        return np.diff(self.event_times)

    def delta_num(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) + 1 for row in self.delta]

    @property
    def nav_windows(self) -> list[tuple[float, float]]:
        return [tuple(w) for w in self.meta.get("nav_windows", [])]

    def equals(self, other: "SimTrace") -> bool:
        """Bitwise equality of every column (NaN matches NaN)."""
        for name in ("t", "q", "v", "e_q", "e_v", "V", "V_d", "u", "delta", "rho",
                     "event", "infeasibility_flag", "bound_flag", "mode"):
            a, b = getattr(self, name), getattr(other, name)
            if a is None or b is None:
                if a is not b:
                    return False
                continue
            if a.shape != b.shape:
                return False
            if a.dtype.kind == "f":
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True


class TraceBuilder:
    """Accumulates rows during a run."""

    def __init__(self, n: int, m: int, second_order: bool):
        self.n, self.m, self.second_order = n, m, second_order
        self.rows: list[tuple] = []

    def append(self, t, q, v, e_q, e_v, V, V_d, u, delta, rho, event, infeas, bound, mode="manipulate"):
        self.rows.append((float(t), np.array(q, dtype=float), None if v is None else np.array(v, dtype=float),
                          np.array(e_q, dtype=float), None if e_v is None else np.array(e_v, dtype=float),
                          float(V), float(V_d), np.array(u, dtype=float), np.array(delta, dtype=int),
                          float("nan") if rho is None else float(rho), bool(event), bool(infeas), bool(bound), mode))

    def build(self, meta: dict | None = None) -> SimTrace:
        n, m, k = self.n, self.m, len(self.rows)
        cols = list(zip(*self.rows)) if self.rows else [()] * 14

        def mat(i, width):
            return np.array(cols[i], dtype=float).reshape(k, width)

        return SimTrace(
            t=np.array(cols[0], dtype=float),
            q=mat(1, n),
            v=mat(2, n) if self.second_order else None,
            e_q=mat(3, n),
            e_v=mat(4, n) if self.second_order else None,
            V=np.array(cols[5], dtype=float),
            V_d=np.array(cols[6], dtype=float),
            u=mat(7, m),
            delta=np.array(cols[8], dtype=int).reshape(k, m),
            rho=np.array(cols[9], dtype=float),
            event=np.array(cols[10], dtype=bool),
            infeasibility_flag=np.array(cols[11], dtype=bool),
            bound_flag=np.array(cols[12], dtype=bool),
            mode=np.array(cols[13], dtype="<U10"),
            meta=dict(meta or {}),
        )


# --- CSV --------------------------------------------------------------------


def header(n: int, m: int) -> list[str]:
    vec = lambda name, k: [f"{name}_{i + 1}" for i in range(k)]
    return (["t"] + vec("q", n) + vec("v", n) + vec("e_q", n) + vec("e_v", n) + ["V", "V_d"]
            + vec("u", m) + vec("delta", m)
            + ["delta_num", "rho", "event", "infeasibility_flag", "bound_flag", "mode"])


def _f(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_csv(trace: SimTrace, path) -> Path:
    path = Path(path)
    n, m = trace.n, trace.m
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header(n, m))
        blank = [""] * n
        for k in range(len(trace)):
            v = [_f(x) for x in trace.v[k]] if trace.v is not None else blank
            e_v = [_f(x) for x in trace.e_v[k]] if trace.e_v is not None else blank
            w.writerow(
                [_f(trace.t[k])] + [_f(x) for x in trace.q[k]] + v + [_f(x) for x in trace.e_q[k]] + e_v
                + [_f(trace.V[k]), _f(trace.V_d[k])] + [_f(x) for x in trace.u[k]]
                + [str(int(x)) for x in trace.delta[k]]
                + [" ".join(str(i + 1) for i in np.flatnonzero(trace.delta[k])), _f(trace.rho[k]),
                   str(int(trace.event[k])), str(int(trace.infeasibility_flag[k])), str(int(trace.bound_flag[k])),
                   str(trace.mode[k])]
            )
    meta_path = path.with_suffix(".meta.json")
    meta = dict(trace.meta)
    meta.update({"n": n, "m": m, "second_order": trace.v is not None})
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_csv(path) -> SimTrace:
    path = Path(path)
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    n = sum(1 for h in head if h.startswith("q_"))
    m = sum(1 for h in head if h.startswith("u_"))
    second = bool(meta.get("second_order", body and body[0][1 + n] != ""))
    b = TraceBuilder(n, m, second)
    fl = lambda s: float("nan") if s == "" else float(s)
    for r in body:
        i = 0
        t = fl(r[i]); i += 1
        q = [fl(x) for x in r[i:i + n]]; i += n
        v = [fl(x) for x in r[i:i + n]]; i += n
        e_q = [fl(x) for x in r[i:i + n]]; i += n
        e_v = [fl(x) for x in r[i:i + n]]; i += n
        V, V_d = fl(r[i]), fl(r[i + 1]); i += 2
        u = [fl(x) for x in r[i:i + m]]; i += m
        delta = [int(x) for x in r[i:i + m]]; i += m
        i += 1  # delta_num is derived from delta
        rho = fl(r[i]); i += 1
        ev, inf, bd = (r[i] == "1"), (r[i + 1] == "1"), (r[i + 2] == "1")
        mode = r[i + 3]
        b.append(t, q, v if second else None, e_q, e_v if second else None, V, V_d, u, delta,
                 None if np.isnan(rho) else rho, ev, inf, bd, mode)
    for key in ("n", "m", "second_order"):
        meta.pop(key, None)
    return b.build(meta)


# --- plots ------------------------------------------------------------------


def plot_trace(trace: SimTrace, out_dir, stem: str = "trace") -> list[Path]:
    """Write SVG panels: e_q, e_v, V vs V_d (log scale), u, delta_num, rho (log scale)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = [("e_q", trace.e_q)]
    if trace.e_v is not None:
        panels.append(("e_v", trace.e_v))
    fig, axes = plt.subplots(len(panels) + 4, 1, figsize=(8, 2.0 * (len(panels) + 4)), sharex=True)
    t = trace.t
    for ax, (name, data) in zip(axes, panels):
        for i in range(data.shape[1]):
            ax.plot(t, data[:, i], lw=0.8, label=f"{name}_{i + 1}")
        ax.set_ylabel(name)
        ax.legend(fontsize=6, ncol=data.shape[1], loc="upper right")
    k = len(panels)
    pos = trace.V > 0
    axes[k].semilogy(t[pos], trace.V[pos], lw=0.9, label="V")
    axes[k].semilogy(t[trace.V_d > 0], trace.V_d[trace.V_d > 0], "--", lw=0.9, label="V_d")
    axes[k].set_ylabel("V")
    axes[k].legend(fontsize=6)
    axes[k + 1].plot(t, trace.u, lw=0.7)
    axes[k + 1].set_ylabel("u")
    for j in range(trace.delta.shape[1]):
        on = trace.delta[:, j] == 1
        axes[k + 2].plot(t[on], np.full(on.sum(), j + 1), ".", ms=1.5)
    axes[k + 2].set_ylabel("delta_num")
    ev = trace.event & (trace.rho > 0)
    if ev.any():
        axes[k + 3].semilogy(t[ev], trace.rho[ev], "o", ms=3)
    axes[k + 3].set_ylabel("rho")
    axes[k + 3].set_xlabel("t [s]")
    for lo, hi in trace.nav_windows:
        for ax in axes:
            ax.axvspan(lo, hi, color="0.85", lw=0)
    fig.tight_layout()
    path = out_dir / f"{stem}.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    return [path]
