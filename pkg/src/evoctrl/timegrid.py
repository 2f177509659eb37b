"""Uniform time grids, trajectories and discrete L2 inner products.

States live at the grid nodes ``t_i = i*dt``; controls and outputs are
piecewise constant with one sample per interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"step count must be a positive integer, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.dt


def _values(values, rows: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise ValueError(f"{what} needs {rows} rows, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class NodeTrajectory:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _values(self.values, self.grid.N + 1, "node trajectory"))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    def times(self) -> np.ndarray:
        return self.grid.nodes()


@dataclass(frozen=True, eq=False)
class IntervalTrajectory:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _values(self.values, self.grid.N, "interval trajectory"))

    @classmethod
    def zeros(cls, grid: TimeGrid, width: int) -> "IntervalTrajectory":
        return cls(grid, np.zeros((grid.N, width)))

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> "IntervalTrajectory":
        """Sample ``f`` at the interval midpoints."""
        return cls(grid, np.array([np.atleast_1d(f(t)) for t in grid.midpoints()], dtype=float))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def times(self) -> np.ndarray:
        return self.grid.midpoints()

    def __add__(self, other):
        _check_same(self, other)
        return IntervalTrajectory(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return IntervalTrajectory(self.grid, self.values - other.values)

    def __mul__(self, s: float):
        return IntervalTrajectory(self.grid, s * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return IntervalTrajectory(self.grid, -self.values)


def _check_same(a: IntervalTrajectory, b: IntervalTrajectory) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    if a.width != b.width:
        raise ValueError(f"width mismatch: {a.width} vs {b.width}")


def reflect(traj: IntervalTrajectory) -> IntervalTrajectory:
    """Time reflection ``v(t) -> v(T - t)``."""
    return IntervalTrajectory(traj.grid, traj.values[::-1].copy())


def l2_inner(a: IntervalTrajectory, b: IntervalTrajectory, W=None) -> float:
    """``dt * sum_i a_i^T W b_i``."""
    _check_same(a, b)
    Wb = b.values if W is None else b.values @ np.asarray(_dense(W)).T
    return float(a.grid.dt * np.sum(a.values * Wb))


def l2_norm(a: IntervalTrajectory, W=None) -> float:
    return float(np.sqrt(max(l2_inner(a, a, W), 0.0)))


def _dense(W):
    return W.toarray() if hasattr(W, "toarray") else W


def reflection_is_isometry_check(u: IntervalTrajectory, W=None) -> bool:
    a = l2_inner(u, u, W)
    b = l2_inner(reflect(u), reflect(u), W)
    return abs(a - b) <= 1e-13 * max(abs(a), 1.0)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, traj, name: str = "x") -> None:
    """Write a trajectory as ``t,<name>0,<name>1,...`` with full precision.

    Node trajectories emit ``N+1`` rows at the nodes, interval trajectories
    ``N`` rows at the interval midpoints.
    """
    path = Path(path)
    times = traj.times()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{name}{j}" for j in range(traj.width)])
        for t, row in zip(times, traj.values):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def read_csv(path, grid: TimeGrid):
    """Read a trajectory CSV back; the row count decides the trajectory type."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    if data.shape[0] == grid.N + 1:
        return NodeTrajectory(grid, data)
    if data.shape[0] == grid.N:
        return IntervalTrajectory(grid, data)
    raise ValueError(f"{path}: {data.shape[0]} rows fit neither N={grid.N} intervals nor nodes")
