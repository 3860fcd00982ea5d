"""Robot-to-channel allocation and contact geometry of the pushed square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core import active_indices
from ..dynamics import rot2


@dataclass(frozen=True)
class RobotFleet:
    """Planar robots; ``assignment[i]`` is robot i's channel index or -1."""

    positions: np.ndarray
    assignment: tuple
    speed: float = 0.5
    radius: float = 0.1

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("robot positions must be k x 2")
        a = tuple(int(x) for x in self.assignment)
        if len(a) != pos.shape[0]:
            raise ValueError("one assignment entry per robot")
        taken = [x for x in a if x >= 0]
        if len(set(taken)) != len(taken):
            raise ValueError("assigned channels must be pairwise distinct")
        if not (self.speed > 0 and self.radius > 0):
            raise ValueError("speed and radius must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def unassigned(cls, positions, speed=0.5, radius=0.1) -> "RobotFleet":
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        return cls(pos, (-1,) * pos.shape[0], speed, radius)

    @property
    def size(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Assignment:
    channels: tuple  # channel index per robot
    cost: float


def square8_contacts(l: float, half_side: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame contact points and outward normals of the eight square channels."""
    a = half_side
    pts = np.array([[-l, -a], [l, -a], [a, -l], [a, l], [l, a], [-l, a], [-a, l], [-a, -l]], dtype=float)
    normals = np.array([[0, -1], [0, -1], [1, 0], [1, 0], [0, 1], [0, 1], [-1, 0], [-1, 0]], dtype=float)
    return pts, normals


def channel_positions(q, l: float, half_side: float, standoff: float) -> np.ndarray:
    """World positions where a robot stands to push through each channel."""
    pts, normals = square8_contacts(l, half_side)
    body = pts + standoff * normals
    return q[:2] + body @ rot2(q[2]).T


def assign_channels(fleet: RobotFleet, new_delta, channel_pos) -> Assignment:
    """Minimum total Euclidean distance perfect matching of robots to active channels."""
    active = active_indices(new_delta)
    if active.size != fleet.size:
        raise ValueError(f"{active.size} active channels for {fleet.size} robots")
    targets = np.asarray(channel_pos, dtype=float)[active]
    cost = np.linalg.norm(fleet.positions[:, None, :] - targets[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    channels = [0] * fleet.size
    for r, c in zip(rows, cols):
        channels[r] = int(active[c])
    return Assignment(tuple(channels), float(cost[rows, cols].sum()))
