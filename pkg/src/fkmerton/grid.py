"""Uniform space-time grids, grid functions and the weighted metric.

Grid functions carry values on a tensor grid over [0, T] x box.  The
fixed-point analysis measures iterates in the weighted norm

    ||f||_kappa = sup_(t,y) exp(-kappa (T - t)) (|f(t,y)| + |grad_y f(t,y)|),

which is equivalent to the plain sup norm with ratio exp(kappa T); the
exponential weight is what turns the iteration map into a contraction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class OutOfDomainError(ValueError):
    """Interpolation query more than one cell outside the grid box."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid on [0, T] x prod_i [lo_i, hi_i]."""

    t: np.ndarray
    ys: tuple

    @classmethod
    def build(cls, T: float, n_t: int, box, n_y) -> "Grid":
        if not T > 0:
            raise ValueError("T must be positive")
        if n_t < 2:
            raise ValueError("need at least 2 time nodes")
        box = [(float(lo), float(hi)) for lo, hi in box]
        n_y = [int(n) for n in (n_y if np.iterable(n_y) else [n_y] * len(box))]
        if len(n_y) != len(box):
            raise ValueError("one node count per factor dimension required")
        if any(n < 3 for n in n_y):
            raise ValueError("need at least 3 nodes per factor dimension")
        if any(hi <= lo for lo, hi in box):
            raise ValueError("box bounds must satisfy low < high")
        t = np.linspace(0.0, float(T), int(n_t))
        ys = tuple(np.linspace(lo, hi, n) for (lo, hi), n in zip(box, n_y))
        grid = cls(t=t, ys=ys)
        grid.t.setflags(write=False)
        for axis in grid.ys:
            axis.setflags(write=False)
        return grid

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def n_t(self) -> int:
        return self.t.size

    @property
    def m(self) -> int:
        return len(self.ys)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def dys(self) -> tuple:
        return tuple(float(axis[1] - axis[0]) for axis in self.ys)

    @property
    def box(self) -> tuple:
        return tuple((float(axis[0]), float(axis[-1])) for axis in self.ys)

    @property
    def shape(self) -> tuple:
        return (self.n_t,) + tuple(axis.size for axis in self.ys)

    def meshes(self):
        """Broadcastable t and y arrays covering the full grid."""
        axes = (self.t,) + self.ys
        mesh = np.meshgrid(*axes, indexing="ij")
        return mesh[0], np.stack(mesh[1:])


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a scalar function on a grid, immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        t_mesh, y_mesh = grid.meshes()
        return cls(grid, np.asarray(fn(t_mesh, y_mesh), dtype=float))

    def sample(self, t, y, clip: bool = False):
        """Multilinear interpolation at (t, y).

        ``y`` has shape (m,) or (m, n).  Queries outside the box by at most
        one cell are clamped with a warning; farther out raises
        OutOfDomainError.  With ``clip=True`` all queries are clamped
        silently (path simulations count excursions themselves).
        """
        t_arr = np.asarray(t, dtype=float)
        y_arr = np.asarray(y, dtype=float)
        if y_arr.ndim == 0:
            y_arr = y_arr[None]
        if y_arr.shape[0] != self.grid.m:
            raise ValueError(f"expected {self.grid.m} factor coordinates")
        scalar = t_arr.ndim == 0 and y_arr.ndim == 1
        batch = np.broadcast_shapes(t_arr.shape, y_arr.shape[1:])

        axes = (self.grid.t,) + self.grid.ys
        queries = [np.broadcast_to(t_arr, batch)] + [np.broadcast_to(y_arr[i], batch)
                                                     for i in range(self.grid.m)]
        index = []
        weight = []
        clamped = 0
        for axis, q in zip(axes, queries):
            step = axis[1] - axis[0]
            if not clip:
                below = q < axis[0] - step * (1 + 1e-9)
                above = q > axis[-1] + step * (1 + 1e-9)
                if np.any(below | above):
                    raise OutOfDomainError(
                        "interpolation query more than one cell outside the grid")
                clamped += int(np.count_nonzero((q < axis[0]) | (q > axis[-1])))
            pos = (q - axis[0]) / step
            i0 = np.clip(np.floor(pos).astype(np.int64), 0, axis.size - 2)
            w = np.clip(pos - i0, 0.0, 1.0)
            index.append(i0)
            weight.append(w)
        if clamped and not clip:
            warnings.warn(f"{clamped} interpolation point(s) clamped to the grid box",
                          stacklevel=2)

        out = np.zeros(batch, dtype=float) if batch else 0.0
        dims = len(axes)
        for corner in range(1 << dims):
            idx = []
            w = 1.0
            for k in range(dims):
                if corner >> k & 1:
                    idx.append(index[k] + 1)
                    w = w * weight[k]
                else:
                    idx.append(index[k])
                    w = w * (1.0 - weight[k])
            out = out + w * self.values[tuple(idx)]
        return float(out) if scalar else out

    def gradient(self):
        """Factor-space gradient, one GridFunction per dimension.

        Central differences inside, second-order one-sided at the faces.
        """
        out = []
        for axis_index, step in enumerate(self.grid.dys):
            dvals = np.gradient(self.values, step, axis=axis_index + 1, edge_order=2)
            out.append(GridFunction(self.grid, dvals))
        return out

    def time_derivative(self) -> "GridFunction":
        dvals = np.gradient(self.values, self.grid.dt, axis=0, edge_order=2)
        return GridFunction(self.grid, dvals)

    def to_csv(self, path) -> None:
        """Write ``t,y1..ym,value`` rows, row-major over time then space."""
        grid = self.grid
        header = ",".join(["t"] + [f"y{i + 1}" for i in range(grid.m)] + ["value"])
        axes = (grid.t,) + grid.ys
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for idx in np.ndindex(*self.values.shape):
                coords = [axes[k][idx[k]] for k in range(len(axes))]
                row = [format(c, ".17g") for c in coords] + [format(self.values[idx], ".17g")]
                fh.write(",".join(row) + "\n")


def sup_distance(f: GridFunction, g: GridFunction) -> float:
    """Plain sup-node distance |f-g| + |grad (f-g)|."""
    return weighted_distance(f, g, 0.0)


def weighted_distance(f: GridFunction, g: GridFunction, kappa: float) -> float:
    """max over nodes of exp(-kappa (T-t)) (|f-g| + |grad_y (f-g)|)."""
    if f.grid is not g.grid and (f.grid.shape != g.grid.shape or not np.array_equal(f.grid.t, g.grid.t)):
        raise ValueError("grid functions live on different grids")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    diff = GridFunction(f.grid, f.values - g.values)
    total = np.abs(diff.values)
    if f.grid.m == 1:
        total = total + np.abs(diff.gradient()[0].values)
    else:
        total = total + np.sqrt(sum(d.values**2 for d in diff.gradient()))
    weight = np.exp(-kappa * (f.grid.T - f.grid.t))
    shape = (f.grid.n_t,) + (1,) * f.grid.m
    return float(np.max(weight.reshape(shape) * total))
