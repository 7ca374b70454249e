"""Fixed-point solver for the distorted value PDE.

The reduced value function h solves the quasilinear terminal-value problem

    h_t + Q(t,y) h + alpha(t,y) . grad_y h + (beta^2/2) tr hess_y h
        + (1/q*) h^(1 - q*) = 0,          h(T, .) = 1,

whose mild formulation is the fixed point of the map L: given an iterate f,
u = L(f) solves the same equation with the nonlinearity frozen at f.  Each
application of L is therefore one linear parabolic solve; iterating from
h_0 = 1 converges super-geometrically.

Discretisation: Crank-Nicolson in time (theta = 1/2, second order) with
centred second-order space stencils and a tridiagonal solve per time level.
The frozen source (1/q*) f^(1-q*) is taken at the half time level.  At the
y-box faces the solution is extended linearly (ghost node u_{-1} =
2 u_0 - u_1), which zeroes the second difference and makes the advection
term one-sided; the box must be wide enough that this far-field condition
does not pollute the region of interest.  Iterates are clamped below at 1
(the continuous operator maps [1, inf) functions into themselves; the
scheme can undershoot by rounding near t = T) and the clamp count is
recorded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .bounds import BoundsLedger, compute_ledger, optimal_rate
from .grid import Grid, GridFunction, weighted_distance
from .model import ConditionReport, MarketModel, check_conditions


class SolverError(RuntimeError):
    """Numerical failure inside a PDE solve."""


class UnsupportedDimensionError(SolverError):
    """The grid solver only handles a single factor dimension."""


@dataclass(frozen=True)
class OperatorTables:
    """Coefficient fields evaluated once per (model, grid) pair."""

    grid: Grid
    potential: np.ndarray  # (n_t, n_y)
    drift: np.ndarray      # (n_t, n_y)
    sub: np.ndarray        # tridiagonal representation of the spatial operator
    diag: np.ndarray
    sup: np.ndarray
    lhs_bands: np.ndarray  # (n_t, 3, n_y) banded I - dt/2 A_k, ready to solve

    @classmethod
    def build(cls, model: MarketModel, grid: Grid) -> "OperatorTables":
        if grid.m != 1:
            raise UnsupportedDimensionError(
                "the grid operator supports one factor dimension; use the Monte Carlo "
                "path for m >= 2")
        if model.m != 1:
            raise UnsupportedDimensionError("model has m != 1")
        t_mesh, y_mesh = grid.meshes()
        q_vals = np.asarray(model.potential(t_mesh, y_mesh), float)
        a_vals = np.asarray(model.factor_drift(t_mesh, y_mesh), float)[0]
        dy = grid.dys[0]
        half_diff = model.beta**2 / (2.0 * dy * dy)
        n_y = grid.shape[1]

        sub = np.empty_like(q_vals)
        diag = np.empty_like(q_vals)
        sup = np.empty_like(q_vals)
        sub[:, 1:-1] = -a_vals[:, 1:-1] / (2.0 * dy) + half_diff
        sup[:, 1:-1] = a_vals[:, 1:-1] / (2.0 * dy) + half_diff
        diag[:, 1:-1] = q_vals[:, 1:-1] - 2.0 * half_diff
        # linear extrapolation faces: second difference zero, one-sided advection
        sub[:, 0] = 0.0
        diag[:, 0] = q_vals[:, 0] - a_vals[:, 0] / dy
        sup[:, 0] = a_vals[:, 0] / dy
        sub[:, -1] = -a_vals[:, -1] / dy
        diag[:, -1] = q_vals[:, -1] + a_vals[:, -1] / dy
        sup[:, -1] = 0.0

        half_dt = grid.dt / 2.0
        lhs = np.zeros((grid.n_t, 3, n_y))
        lhs[:, 0, 1:] = -half_dt * sup[:, :-1]
        lhs[:, 1, :] = 1.0 - half_dt * diag
        lhs[:, 2, :-1] = -half_dt * sub[:, 1:]
        return cls(grid=grid, potential=q_vals, drift=a_vals,
                   sub=sub, diag=diag, sup=sup, lhs_bands=lhs)

    def apply_spatial(self, level: int, u: np.ndarray) -> np.ndarray:
        out = self.diag[level] * u
        out[1:] += self.sub[level, 1:] * u[:-1]
        out[:-1] += self.sup[level, :-1] * u[1:]
        return out


def _backward_sweep(tables: OperatorTables, source: np.ndarray):
    """One linear solve of u_t + A u + source = 0, u(T) = 1.

    ``source`` holds the frozen nonlinearity on grid levels; consecutive
    levels are averaged, which evaluates it at the half time level.
    Returns (values, clamp_count).
    """
    grid = tables.grid
    dt = grid.dt
    values = np.empty(grid.shape)
    values[-1] = 1.0
    clamped = 0
    u = values[-1].copy()
    for k in range(grid.n_t - 2, -1, -1):
        rhs = u + (dt / 2.0) * tables.apply_spatial(k + 1, u)
        rhs += (dt / 2.0) * (source[k] + source[k + 1])
        u = solve_banded((1, 1), tables.lhs_bands[k], rhs, check_finite=False)
        if not np.all(np.isfinite(u)):
            j = int(np.argmin(np.isfinite(u)))
            raise SolverError(
                f"non-finite value at t={grid.t[k]:.6g}, y={grid.ys[0][j]:.6g}")
        low = u < 1.0
        if np.any(low):
            clamped += int(np.count_nonzero(low))
            u = np.maximum(u, 1.0)
        values[k] = u
    return values, clamped


def apply_operator(f: GridFunction, model: MarketModel,
                   tables: Optional[OperatorTables] = None) -> GridFunction:
    """One application u = L(f) of the fixed-point map.

    ``f`` must be >= 1 on its grid; the result is again >= 1 (clamped at
    rounding level, the count is attached as ``clamp_count``).
    """
    if float(np.min(f.values)) < 1.0 - 1e-12:
        raise ValueError("operator input must satisfy f >= 1 on the grid")
    if tables is None:
        tables = OperatorTables.build(model, f.grid)
    source = np.power(np.maximum(f.values, 1.0), 1.0 - model.q_star) / model.q_star
    values, clamped = _backward_sweep(tables, source)
    out = GridFunction(f.grid, values)
    object.__setattr__(out, "clamp_count", clamped)
    return out


def hjb_residual(h: GridFunction, model: MarketModel,
                 tables: Optional[OperatorTables] = None) -> GridFunction:
    """Pointwise residual of the nonlinear equation on the grid.

    Second-order differences throughout (one-sided in t at the endpoints);
    the y-faces carry the artificial far-field condition, not the PDE, so
    the residual is zero-padded there.
    """
    if tables is None:
        tables = OperatorTables.build(model, h.grid)
    grid = h.grid
    dy = grid.dys[0]
    vals = h.values
    res = np.gradient(vals, grid.dt, axis=0, edge_order=2)
    res = res + tables.potential * vals
    interior = slice(1, -1)
    res[:, interior] += tables.drift[:, interior] * (vals[:, 2:] - vals[:, :-2]) / (2.0 * dy)
    res[:, interior] += model.beta**2 / 2.0 * (vals[:, 2:] - 2.0 * vals[:, 1:-1] + vals[:, :-2]) / dy**2
    res += np.power(vals, 1.0 - model.q_star) / model.q_star
    res[:, 0] = 0.0
    res[:, -1] = 0.0
    return GridFunction(grid, res)


@dataclass(frozen=True)
class SolveResult:
    h: GridFunction
    delta_seq: tuple          # sup |h_n - h_{n-1}|, n = 1..n_done
    metric_seq: tuple         # weighted distance of consecutive iterates
    n_done: int
    stopped_by: str           # "tol" or "n_max"
    residual: GridFunction
    residual_sup: float
    clamp_counts: tuple
    ledger: BoundsLedger
    report: ConditionReport
    iterate_history: Optional[tuple] = None  # h_0 .. h_n when requested

    @property
    def grid(self) -> Grid:
        return self.h.grid


def solve_fixed_point(model: MarketModel, grid: Grid, tol: float = 1e-15,
                      n_max: int = 20, zeta: Optional[float] = None,
                      keep_history: bool = False,
                      report: Optional[ConditionReport] = None,
                      condition_samples: int = 4096,
                      condition_seed: int = 0) -> SolveResult:
    """Iterate h_{n+1} = L(h_n) from h_0 = 1 until sup |h_n - h_{n-1}| <= tol.

    The metric weight defaults to the per-n optimised zeta*_{n_max}; pass a
    positive ``zeta`` to fix it instead.  The returned ledger is computed
    for the weight actually used.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    tables = OperatorTables.build(model, grid)
    if report is None:
        report = check_conditions(model, grid.box, n_samples=condition_samples,
                                  seed=condition_seed)
    if zeta is None:
        base = compute_ledger(report, model, zeta=1.0)
        zeta = optimal_rate(n_max, base)[1]
    ledger = compute_ledger(report, model, zeta=float(zeta))

    current = GridFunction.constant(grid, 1.0)
    history = [current]
    deltas: list[float] = []
    metrics: list[float] = []
    clamp_counts: list[int] = []
    stopped_by = "n_max"
    for _ in range(n_max):
        nxt = apply_operator(current, model, tables=tables)
        clamp_counts.append(getattr(nxt, "clamp_count", 0))
        delta = float(np.max(np.abs(nxt.values - current.values)))
        deltas.append(delta)
        metrics.append(weighted_distance(nxt, current, ledger.kappa))
        if keep_history:
            history.append(nxt)
        current = nxt
        if delta <= tol:
            stopped_by = "tol"
            break

    residual = hjb_residual(current, model, tables=tables)
    residual_sup = float(np.max(np.abs(residual.values)))
    return SolveResult(
        h=current,
        delta_seq=tuple(deltas),
        metric_seq=tuple(metrics),
        n_done=len(deltas),
        stopped_by=stopped_by,
        residual=residual,
        residual_sup=residual_sup,
        clamp_counts=tuple(clamp_counts),
        ledger=ledger,
        report=report,
        iterate_history=tuple(history) if keep_history else None,
    )
