"""Optimal controls, value function, and wealth simulation built on h.

Once the distortion function h is known, the optimal investment control is

    pi*(t,y) = theta/(1-gamma)
               + eps sqrt(1-rho^2) beta sigma*' D_y h / ((1-gamma) h),

the optimal consumption rate is c* = h^(-q*), and the optimal wealth follows
dX = a* X dt + X b*' dW with a* = r + pi*'theta - c* and b* = pi*.  The
control pi is expressed in the volatility-twisted coordinates in which the
wealth equation reads dX = X (r + pi'theta - c) dt + X pi' dW; that is the
parametrization the Hamilton function below uses as well.

Note on shapes: the printed strategy formula applies the m x d matrix
sigma* directly to the m-vector D_y h, which only type-checks when m = d.
The sup-calculation behind it contracts sigma*' against the mixed
derivative vector, and that transposed reading is dimensionally valid for
every (m, d); we use it throughout.  For the square presets (and any
orthogonal sigma*) the two coincide up to orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mc
from .bounds import BoundsLedger, control_gap_bound
from .grid import Grid, GridFunction
from .model import MarketModel


@dataclass(frozen=True)
class StrategyField:
    """Optimal (or candidate) controls tabulated on a grid.

    pi and b have shape (d,) + grid.shape; c and a have grid.shape.
    """

    grid: Grid
    h: GridFunction
    pi: np.ndarray
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    grad_h: tuple

    def __post_init__(self):
        for arr in (self.pi, self.c, self.a, self.b):
            arr.setflags(write=False)

    def component(self, name: str, index: int = 0) -> GridFunction:
        if name == "pi":
            return GridFunction(self.grid, self.pi[index])
        if name == "b":
            return GridFunction(self.grid, self.b[index])
        if name == "c":
            return GridFunction(self.grid, self.c)
        if name == "a":
            return GridFunction(self.grid, self.a)
        raise ValueError(f"unknown component {name!r}")

    def samplers(self):
        """(a, b, c) interpolation closures for scalar t and batched y."""
        a_fn = mc._line_sampler(GridFunction(self.grid, self.a))
        b_fns = [mc._line_sampler(GridFunction(self.grid, self.b[i]))
                 for i in range(self.b.shape[0])]
        c_fn = mc._line_sampler(GridFunction(self.grid, self.c))

        def b_all(t, y):
            return np.stack([fn(t, y) for fn in b_fns])

        return a_fn, b_all, c_fn


def optimal_controls(h: GridFunction, model: MarketModel) -> StrategyField:
    """Tabulate pi*, c*, a*, b* from h on its grid."""
    grid = h.grid
    t_mesh, y_mesh = grid.meshes()
    theta = model.risk_premium(t_mesh, y_mesh)          # (d,) + shape
    r = np.broadcast_to(np.asarray(model.eval_r(t_mesh, y_mesh), float),
                        grid.shape)
    grad = h.gradient()
    grad_vals = np.stack([g.values for g in grad])      # (m,) + shape
    twist = np.einsum("ij,i...->j...", model.sigma_star, grad_vals)  # (d,) + shape
    gamma1 = model.gamma1
    correction = (model.eps * np.sqrt(1.0 - model.rho ** 2) * model.beta
                  * gamma1) * twist / h.values
    pi = theta * gamma1 + correction
    c = h.values ** (-model.q_star)
    a = r + np.einsum("i...,i...->...", pi, theta) - c
    return StrategyField(grid=grid, h=h, pi=pi, c=c, a=a, b=pi.copy(),
                         grad_h=tuple(grad))


def value_function(h: GridFunction, model: MarketModel, t: float, x, y) -> float:
    """z(t, x, y) = x^gamma h(t, y)^eps by interpolation of h."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise ValueError("wealth must be positive")
    hval = h.sample(t, y)
    return x_arr ** model.gamma * np.asarray(hval) ** model.eps


# ----------------------------------------------------------------------
# Hamiltonian verification


@dataclass(frozen=True)
class HamiltonianReport:
    t: float
    y: np.ndarray
    x: float
    n_samples: int
    seed: int
    h0_star: float
    max_violation: float
    worst_pi: np.ndarray
    worst_c: float
    passed: bool


def _h0_terms(model: MarketModel, t: float, y: np.ndarray, x: float,
              h: GridFunction):
    """Common inputs of H0 at one state: theta, r, F, q and M entries."""
    theta = np.atleast_1d(model.risk_premium(t, y))
    r = float(model.eval_r(t, y))
    f_drift = np.atleast_1d(model.eval_F(t, y))
    hval = float(h.sample(t, y))
    grad = np.array([float(g.sample(t, y)) for g in h.gradient()])
    gamma = model.gamma
    eps = model.eps
    q1 = gamma * x ** (gamma - 1.0) * hval ** eps
    q_tilde = eps * x ** gamma * hval ** (eps - 1.0) * grad
    mu = gamma * (gamma - 1.0) * x ** (gamma - 2.0) * hval ** eps
    mu_tilde = eps * gamma * x ** (gamma - 1.0) * hval ** (eps - 1.0) * grad
    return theta, r, f_drift, hval, q1, q_tilde, mu, mu_tilde


def hamiltonian_value(model: MarketModel, t: float, y, x: float,
                      h: GridFunction, pi: np.ndarray, c: float) -> float:
    """H0 at the control (pi, c), with q and M built from z = x^gamma h^eps.

    The second-derivative block M0 = D_yy z is not needed for maximizer
    comparisons (it does not depend on the control), so its trace term is
    omitted; all control-dependent terms are exact.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    theta, r, f_drift, _, q1, q_tilde, mu, mu_tilde = _h0_terms(model, t, y_arr, x, h)
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    lin = theta * q1 + model.beta * np.sqrt(1.0 - model.rho ** 2) * (
        model.sigma_star.T @ mu_tilde)
    value = (x * r * q1 + float(f_drift @ q_tilde)
             + x ** model.gamma * c ** model.gamma - x * c * q1
             + 0.5 * x ** 2 * mu * float(pi @ pi)
             + x * float(pi @ lin))
    return value


def hamiltonian_maximizer(model: MarketModel, t: float, y, x: float,
                          h: GridFunction):
    """The closed-form argmax (pi*, c*) of H0 at one state."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    theta, _, _, hval, q1, _, mu, mu_tilde = _h0_terms(model, t, y_arr, x, h)
    lin = theta * q1 + model.beta * np.sqrt(1.0 - model.rho ** 2) * (
        model.sigma_star.T @ mu_tilde)
    pi_star = lin / (x * abs(mu))
    c_star = (model.gamma / q1) ** model.gamma1 / x
    return pi_star, c_star, hval


def hamiltonian_check(h: GridFunction, model: MarketModel, t: float, y,
                      x: float, n_samples: int = 256,
                      seed: int = 0) -> HamiltonianReport:
    """Verify that no sampled control beats the closed-form maximizer.

    Controls are sampled around (pi*, c*) at several scales; the report
    records the largest H0 excess relative to 1 + |H0(pi*, c*)|.
    """
    if x <= 0:
        raise ValueError("wealth must be positive")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    pi_star, c_star, _ = hamiltonian_maximizer(model, t, y_arr, x, h)
    h0_star = hamiltonian_value(model, t, y_arr, x, h, pi_star, c_star)
    rng = np.random.default_rng(seed)
    worst = -np.inf
    worst_pi, worst_c = pi_star, c_star
    scales = (1e-3, 0.1, 1.0, 10.0)
    for k in range(n_samples):
        scale = scales[k % len(scales)]
        pi = pi_star + scale * rng.standard_normal(model.d)
        c = max(0.0, c_star * (1.0 + scale * rng.standard_normal()))
        val = hamiltonian_value(model, t, y_arr, x, h, pi, c)
        excess = (val - h0_star) / (1.0 + abs(h0_star))
        if excess > worst:
            worst, worst_pi, worst_c = excess, pi, c
    return HamiltonianReport(t=t, y=y_arr, x=x, n_samples=n_samples, seed=seed,
                             h0_star=h0_star, max_violation=worst,
                             worst_pi=np.atleast_1d(worst_pi), worst_c=worst_c,
                             passed=worst <= 1e-9)


# ----------------------------------------------------------------------
# wealth simulation


@dataclass(frozen=True)
class WealthSummary:
    x0: float
    y0: np.ndarray
    n_paths: int
    step: float
    seed: int
    j_value: float
    j_stderr: float
    record_times: np.ndarray
    x_mean: np.ndarray
    x_quantiles: dict
    min_x: float
    out_of_box: int

    def __post_init__(self):
        for arr in (self.record_times, self.x_mean):
            arr.setflags(write=False)


def simulate_wealth(field: StrategyField, model: MarketModel, x0: float, y0,
                    n_paths: int, step: float, seed: int, threads: int = 1,
                    n_records: int = 11) -> WealthSummary:
    """Co-simulate (Y, X) under the tabulated controls and estimate J.

    Y follows its Euler scheme driven by (W, V); X is advanced by the
    exponential of the increment of log X (so it stays positive on every
    path), reading a*, b*, c* off the field by clamped interpolation.  The
    realized objective per path is the trapezoidal integral of (c X)^gamma
    plus the terminal X^gamma; the estimate and its standard error are the
    sample mean and scaled standard deviation over paths.

    Two calls with the same (seed, step, n_paths) consume identical noise
    whatever the field, which makes strategy comparisons common-random-
    number comparisons by construction.
    """
    if x0 <= 0:
        raise ValueError("initial wealth must be positive")
    start = np.atleast_1d(np.asarray(y0, dtype=float))
    if start.shape != (model.m,):
        raise ValueError(f"y0 must have {model.m} components")
    dts = mc._time_steps(model.T, step)
    n_steps = len(dts)
    rec_idx = np.unique(np.linspace(0, n_steps, n_records).round().astype(int))
    times = np.concatenate(([0.0], np.cumsum(dts)))
    a_fn, b_fn, c_fn = field.samplers()
    box = field.grid.box
    gamma = model.gamma

    def worker(blk: int, nb: int):
        rng = mc._substream(seed, blk)
        x = np.full(nb, float(x0))
        util = np.zeros(nb)
        snaps = np.empty((rec_idx.size, nb))
        ptr = 0
        if rec_idx[0] == 0:
            snaps[0] = x
            ptr = 1
        u_prev = (np.broadcast_to(c_fn(0.0, np.repeat(start[:, None], nb, axis=1)),
                                  (nb,)) * x0) ** gamma
        escaped = 0
        min_x = float(x0)
        for k, (s, dt, y_cur, dw, _, _, y_next) in enumerate(
                mc.factor_block_steps(model, start, dts, rng, nb)):
            for axis in range(model.m):
                lo, hi = box[axis]
                escaped += int(np.count_nonzero((y_cur[axis] < lo) | (y_cur[axis] > hi)))
            a_val = a_fn(s, y_cur)
            b_val = b_fn(s, y_cur)
            growth = (a_val - 0.5 * np.einsum("i...,i...->...", b_val, b_val)) * dt
            growth = growth + np.einsum("i...,i...->...", b_val, dw)
            x = x * np.exp(growth)
            min_x = min(min_x, float(np.min(x)))
            s_next = times[k + 1]
            u_next = (np.broadcast_to(c_fn(s_next, y_next), (nb,)) * x) ** gamma
            util += 0.5 * dt * (u_prev + u_next)
            u_prev = u_next
            if ptr < rec_idx.size and rec_idx[ptr] == k + 1:
                snaps[ptr] = x
                ptr += 1
        j = util + x ** gamma
        return j, snaps, escaped, min_x

    parts = mc._run_blocks(worker, n_paths, threads)
    j_all = np.concatenate([p[0] for p in parts])
    snaps = np.concatenate([p[1] for p in parts], axis=1)
    out_of_box = sum(p[2] for p in parts)
    min_x = min(p[3] for p in parts)
    j_val = float(np.mean(j_all))
    j_se = float(np.std(j_all, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    qs = {q: np.quantile(snaps, q / 100.0, axis=1) for q in (5, 25, 50, 75, 95)}
    return WealthSummary(x0=float(x0), y0=start, n_paths=n_paths, step=step,
                         seed=seed, j_value=j_val, j_stderr=j_se,
                         record_times=times[rec_idx],
                         x_mean=np.mean(snaps, axis=1), x_quantiles=qs,
                         min_x=min_x, out_of_box=out_of_box)


# ----------------------------------------------------------------------
# control-gap certificates


def strategy_error_bound(n: int, ledger: BoundsLedger) -> float:
    """Guaranteed sup bound on |pi* - pi*_n| + |c* - c*_n| after n iterations."""
    return control_gap_bound(n, ledger)


def observed_control_gap(field_a: StrategyField, field_b: StrategyField) -> float:
    """sup over nodes of |pi_a - pi_b| + |c_a - c_b| (Euclidean norm in pi)."""
    dpi = np.sqrt(np.sum((field_a.pi - field_b.pi) ** 2, axis=0))
    return float(np.max(dpi + np.abs(field_a.c - field_b.c)))
