"""Cooperative A*: prioritized space-time search on a 4-connected grid.

Robots are planned one at a time. Each finished plan is written into a
reservation table (cell at time, directed edge at time, and the goal cell
from the arrival time onwards); later robots treat those as obstacles.
One grid move or wait takes ``cell / speed`` seconds.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import rot2
from ..errors import PlanningFailure

MOVES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class Grid:
    x0: float
    y0: float
    cell: float
    blocked: np.ndarray  # shape (nx, ny), True = obstacle

    @classmethod
    def empty(cls, extent, cell: float) -> "Grid":
        xmin, xmax, ymin, ymax = extent
        nx = int(math.floor((xmax - xmin) / cell + 1e-9)) + 1
        ny = int(math.floor((ymax - ymin) / cell + 1e-9)) + 1
        return cls(float(xmin), float(ymin), float(cell), np.zeros((nx, ny), dtype=bool))

    @property
    def shape(self) -> tuple:
        return self.blocked.shape

    def to_cell(self, p) -> tuple:
        i = int(round((p[0] - self.x0) / self.cell))
        j = int(round((p[1] - self.y0) / self.cell))
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
            raise PlanningFailure(f"point ({p[0]:.3f}, {p[1]:.3f}) lies outside the planning grid")
        return i, j

    def to_point(self, c) -> np.ndarray:
        return np.array([self.x0 + c[0] * self.cell, self.y0 + c[1] * self.cell])

    def centers(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        return np.stack([self.x0 + ii * self.cell, self.y0 + jj * self.cell], axis=-1)

    def free(self, c) -> bool:
        return 0 <= c[0] < self.shape[0] and 0 <= c[1] < self.shape[1] and not self.blocked[c]

    def with_blocked(self, blocked: np.ndarray) -> "Grid":
        return Grid(self.x0, self.y0, self.cell, blocked)


def square_distance(points: np.ndarray, pose, half_side: float) -> np.ndarray:
    """Euclidean distance from points (..., 2) to a rotated square (0 inside)."""
    rel = (points - np.asarray(pose[:2])) @ rot2(pose[2])  # world -> body
    d = np.maximum(np.abs(rel) - half_side, 0.0)
    return np.linalg.norm(d, axis=-1)


def object_obstacle(grid: Grid, pose, half_side: float, inflate: float) -> Grid:
    """Block every cell whose center lies within ``inflate`` of the object."""
    dist = square_distance(grid.centers(), pose, half_side)
    return grid.with_blocked(grid.blocked | (dist < inflate))


@dataclass(frozen=True)
class NavigationPlan:
    paths: tuple  # per robot: tuple of cells, one per time step (index 0 = start)
    step_time: float

    @property
    def steps(self) -> int:
        return max((len(p) - 1 for p in self.paths), default=0)

    @property
    def delta(self) -> float:
        """Time until the last robot arrives."""
        return self.steps * self.step_time

    def cell_at(self, robot: int, k: int) -> tuple:
        p = self.paths[robot]
        return p[min(k, len(p) - 1)]


class ReservationTable:
    def __init__(self):
        self.vertex: set = set()
        self.edge: set = set()
        self.parked: dict = {}  # cell -> time from which it is occupied forever
        self.last_use: dict = {}  # cell -> last time reserved by a moving robot

    def add_path(self, path):
        for k, c in enumerate(path):
            self.vertex.add((c, k))
            self.last_use[c] = max(self.last_use.get(c, -1), k)
            if k:
                self.edge.add((path[k - 1], c, k))
        self.parked[path[-1]] = min(self.parked.get(path[-1], math.inf), len(path) - 1)

    def blocked(self, c, k) -> bool:
        return (c, k) in self.vertex or self.parked.get(c, math.inf) <= k

    def swap(self, a, b, k) -> bool:
        """Moving a -> b arriving at k collides head-on with a reserved b -> a."""
        return (b, a, k) in self.edge


def _space_time_astar(grid: Grid, start, goal, table: ReservationTable, horizon: int):
    def h(c):
        return abs(c[0] - goal[0]) + abs(c[1] - goal[1])

    tie = itertools.count()
    open_ = [(h(start), next(tie), 0, start)]
    parent = {(start, 0): None}
    # the goal may be entered only once no earlier robot passes through it later
    goal_free_from = table.last_use.get(goal, -1) + 1
    while open_:
        _, _, k, c = heapq.heappop(open_)
        if c == goal and k >= goal_free_from:
            path = []
            node = (c, k)
            while node is not None:
                path.append(node[0])
                node = parent[node]
            return path[::-1]
        if k >= horizon:
            continue
        for dx, dy in MOVES:
            nc = (c[0] + dx, c[1] + dy)
            nk = k + 1
            if not grid.free(nc) or table.blocked(nc, nk) or table.swap(c, nc, nk):
                continue
            if (nc, nk) in parent:
                continue
            parent[(nc, nk)] = (c, k)
            heapq.heappush(open_, (nk + h(nc), next(tie), nk, nc))
    return None


def plan_paths(starts, goals, grid: Grid, step_time: float, order=None, horizon: int | None = None) -> NavigationPlan:
    """Plan conflict-free paths from start points to goal points.

    ``order`` lists robot indices from highest to lowest priority. Every
    robot's start cell is reserved at t = 0 so no higher-priority robot plans
    through it before it has moved.
    """
    k = len(starts)
    if len(goals) != k:
        raise ValueError("one goal per robot")
    s_cells = [grid.to_cell(p) for p in starts]
    g_cells = [grid.to_cell(p) for p in goals]
    for name, cells in (("start", s_cells), ("goal", g_cells)):
        for i, c in enumerate(cells):
            if not grid.free(c):
                raise PlanningFailure(f"robot {i} {name} cell {c} is blocked")
        if len(set(cells)) != len(cells):
            raise PlanningFailure(f"two robots share a {name} cell")
    order = list(range(k)) if order is None else list(order)
    if sorted(order) != list(range(k)):
        raise ValueError("order must be a permutation of the robot indices")
    if horizon is None:
        horizon = 4 * (grid.shape[0] + grid.shape[1]) + 8 * k
    table = ReservationTable()
    for c in s_cells:
        table.vertex.add((c, 0))
    paths = [None] * k
    for i in order:
        table.vertex.discard((s_cells[i], 0))
        path = _space_time_astar(grid, s_cells[i], g_cells[i], table, horizon)
        if path is None:
            raise PlanningFailure(f"no conflict-free path for robot {i} from {s_cells[i]} to {g_cells[i]}")
        table.add_path(path)
        paths[i] = tuple(path)
    return NavigationPlan(tuple(paths), float(step_time))


def audit_plan(plan: NavigationPlan, grid: Grid | None = None) -> list[str]:
    """Conflicts in a plan: shared cells, head-on swaps, blocked or non-adjacent moves."""
    problems = []
    T = plan.steps
    for k in range(T + 1):
        cells = [plan.cell_at(r, k) for r in range(len(plan.paths))]
        if len(set(cells)) != len(cells):
            problems.append(f"vertex conflict at step {k}: {cells}")
        if grid is not None:
            problems += [f"robot {r} on blocked cell {c} at step {k}" for r, c in enumerate(cells) if not grid.free(c)]
        if k == 0:
            continue
        prev = [plan.cell_at(r, k - 1) for r in range(len(plan.paths))]
        for r, (a, b) in enumerate(zip(prev, cells)):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) > 1:
                problems.append(f"robot {r} jumps from {a} to {b} at step {k}")
        for r1, r2 in itertools.combinations(range(len(cells)), 2):
            if prev[r1] == cells[r2] and prev[r2] == cells[r1] and prev[r1] != prev[r2]:
                problems.append(f"robots {r1} and {r2} swap cells at step {k}")
    return problems
