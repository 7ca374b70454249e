"""Monte Carlo companions to the finite-difference operator.

The factor process eta follows d eta = alpha dt + beta dU with U a standard
m-dimensional Brownian motion, so the expectation functional

    E G(t,T) + (1/q*) int_t^T E f(s, eta_s)^(1-q*) G(t,s) ds,
    G(t,s) = exp(int_t^s Q(u, eta_u) du),

can be estimated directly on Euler-Maruyama paths.  That estimate never sees
the PDE discretization and serves as an independent oracle for it.

Reproducibility contract: paths are simulated in fixed blocks of ``BLOCK``
consecutive path indices.  Block ``b`` draws all of its noise from the
Philox substream ``jumped(b)`` of the master seed, and per-path statistics
are assembled in path-index order before any reduction.  The output is
therefore a deterministic function of (seed, step, n_paths) alone, no matter
how many worker threads execute the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .grid import GridFunction
from .model import MarketModel

# Paths per RNG substream.  Fixed: changing it changes every stream.
# 16384 amortizes numpy dispatch overhead in the per-step loop while leaving
# enough blocks at typical path counts for the thread pool to matter.
BLOCK = 16384


class SimulationError(RuntimeError):
    """Raised when a coefficient cannot be evaluated along a path."""


def _substream(seed: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed).jumped(block_index))


def _time_steps(span: float, step: float):
    """Split ``span`` into full steps of ``step`` plus a fractional tail."""
    if span <= 0:
        raise ValueError("simulation span must be positive")
    if step <= 0 or step > span * (1 + 1e-12):
        raise ValueError("step must lie in (0, span]")
    n_full = int(np.floor(span / step + 1e-12))
    tail = span - n_full * step
    if tail <= step * 1e-9:
        return [step] * n_full
    return [step] * n_full + [tail]


def _blocks(n_paths: int):
    for b, lo in enumerate(range(0, n_paths, BLOCK)):
        yield b, lo, min(BLOCK, n_paths - lo)


def _run_blocks(worker, n_paths: int, threads: int) -> list:
    """Execute ``worker(block_index, n_block)`` for every block, in order."""
    jobs = list(_blocks(n_paths))
    if threads <= 1:
        return [worker(b, nb) for b, _, nb in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, b, nb) for b, _, nb in jobs]
        return [f.result() for f in futures]


# ----------------------------------------------------------------------
# eta process and the operator estimate


@dataclass(frozen=True)
class PathBatch:
    """Terminal snapshot of an eta simulation.

    ``terminal`` has shape (m, n_paths) and ``int_q`` holds the trapezoidal
    accumulation of Q along each path, so exp(int_q) is G(t, horizon).
    """

    t: float
    y0: np.ndarray
    step: float
    n_steps: int
    n_paths: int
    seed: int
    terminal: np.ndarray
    int_q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
        self.terminal.setflags(write=False)
        self.int_q.setflags(write=False)


class OperatorEstimate(NamedTuple):
    value: float
    stderr: float
    n_paths: int
    out_of_box: int


def _eval_guard(fn, t, y, what: str, block: int):
    try:
        return fn(t, y)
    except (ArithmeticError, ValueError) as exc:
        raise SimulationError(
            f"{what} evaluation failed at t={t:.6g} in path block {block}: {exc}"
        ) from exc


def _line_sampler(f: GridFunction):
    """Interpolation closure for scalar t and a (m, n) batch of y.

    The m = 1 case is hand-rolled (one time slab, one linear gather) because
    the generic sampler's per-call machinery dominates tight path loops.
    Clamping semantics match GridFunction.sample(..., clip=True).
    """
    if f.grid.m != 1:
        def generic(t: float, y: np.ndarray):
            return np.broadcast_to(
                np.asarray(f.sample(t, y, clip=True), float), y.shape[1:])
        return generic
    taxis, yaxis, vals = f.grid.t, f.grid.ys[0], f.values
    dt_, dy_ = taxis[1] - taxis[0], yaxis[1] - yaxis[0]

    def sample(t: float, y: np.ndarray):
        pos_t = (t - taxis[0]) / dt_
        it = min(max(int(pos_t), 0), taxis.size - 2)
        wt = min(max(pos_t - it, 0.0), 1.0)
        pos = (y[0] - yaxis[0]) / dy_
        iy = np.clip(pos.astype(np.int64), 0, yaxis.size - 2)
        wy = np.clip(pos - iy, 0.0, 1.0)
        row0, row1 = vals[it], vals[it + 1]
        v0 = row0[iy] * (1.0 - wy) + row0[iy + 1] * wy
        v1 = row1[iy] * (1.0 - wy) + row1[iy + 1] * wy
        return v0 * (1.0 - wt) + v1 * wt

    return sample


def simulate_eta(model: MarketModel, t: float, y, horizon: float,
                 n_paths: int, step: float, seed: int,
                 threads: int = 1) -> PathBatch:
    """Euler-Maruyama simulation of eta from (t, y) up to ``horizon``.

    eta_{k+1} = eta_k + alpha(t_k, eta_k) dt + beta sqrt(dt) xi_k with
    standard m-dimensional Gaussian xi_k, carrying int Q du by trapezoid.
    """
    y0 = np.atleast_1d(np.asarray(y, dtype=float))
    if y0.shape != (model.m,):
        raise ValueError(f"y must have {model.m} components")
    if not t < horizon <= model.T + 1e-12:
        raise ValueError("need t < horizon <= T")
    dts = _time_steps(horizon - t, step)

    def worker(b: int, nb: int):
        rng = _substream(seed, b)
        cur = np.repeat(y0[:, None], nb, axis=1)
        acc = np.zeros(nb)
        drift, q_prev = _eval_guard(model.drift_potential, t, cur, "coefficient", b)
        q_prev = np.broadcast_to(q_prev, (nb,)).copy()
        s = t
        for dt in dts:
            xi = rng.standard_normal((model.m, nb))
            cur = cur + drift * dt + model.beta * np.sqrt(dt) * xi
            s = s + dt
            drift, q_next = _eval_guard(model.drift_potential, s, cur, "coefficient", b)
            q_next = np.broadcast_to(q_next, (nb,))
            acc += 0.5 * dt * (q_prev + q_next)
            q_prev = q_next
        return cur, acc

    parts = _run_blocks(worker, n_paths, threads)
    terminal = np.concatenate([p[0] for p in parts], axis=1)
    int_q = np.concatenate([p[1] for p in parts])
    return PathBatch(t=t, y0=y0, step=step, n_steps=len(dts),
                     n_paths=n_paths, seed=seed, terminal=terminal, int_q=int_q)


def mc_operator_value(f: GridFunction, model: MarketModel, t: float, y,
                      n_paths: int, step: float, seed: int,
                      threads: int = 1) -> OperatorEstimate:
    """Monte Carlo estimate of the expectation functional at (t, y).

    The time integral of f^(1-q*) G uses the trapezoid rule over the
    simulation steps; f is interpolated from its grid with silent clamping,
    and the number of clamped queries is reported in ``out_of_box``.
    """
    y0 = np.atleast_1d(np.asarray(y, dtype=float))
    if y0.shape != (model.m,):
        raise ValueError(f"y must have {model.m} components")
    box = f.grid.box
    dts = _time_steps(model.T - t, step)
    power = 1.0 - model.q_star

    interp = _line_sampler(f)

    def worker(b: int, nb: int):
        rng = _substream(seed, b)
        cur = np.repeat(y0[:, None], nb, axis=1)
        growth = np.ones(nb)                      # G(t, s) per path
        drift, q_prev = _eval_guard(model.drift_potential, t, cur, "coefficient", b)
        q_prev = np.broadcast_to(q_prev, (nb,)).copy()
        src_prev = np.broadcast_to(interp(t, cur) ** power, (nb,)).copy()
        source = np.zeros(nb)
        escaped = 0
        s = t
        for dt in dts:
            xi = rng.standard_normal((model.m, nb))
            cur = cur + drift * dt + model.beta * np.sqrt(dt) * xi
            s = s + dt
            for axis in range(model.m):
                lo, hi = box[axis]
                escaped += int(np.count_nonzero((cur[axis] < lo) | (cur[axis] > hi)))
            drift, q_next = _eval_guard(model.drift_potential, s, cur, "coefficient", b)
            q_next = np.broadcast_to(q_next, (nb,))
            growth = growth * np.exp(0.5 * dt * (q_prev + q_next))
            src_next = np.broadcast_to(interp(s, cur) ** power, (nb,)) * growth
            source += 0.5 * dt * (src_prev + src_next)
            q_prev = q_next
            src_prev = src_next
        return growth + source / model.q_star, escaped

    parts = _run_blocks(worker, n_paths, threads)
    values = np.concatenate([p[0] for p in parts])
    out_of_box = sum(p[1] for p in parts)
    mean = float(np.mean(values))
    if n_paths > 1:
        stderr = float(np.std(values, ddof=1) / np.sqrt(n_paths))
    else:
        stderr = 0.0
    return OperatorEstimate(mean, stderr, n_paths, out_of_box)


# ----------------------------------------------------------------------
# factor process with its driving noise


@dataclass(frozen=True)
class FactorPaths:
    """Factor paths with the Brownian increments that drove them.

    Shapes: y is (m, n_paths, n_steps + 1); dw is (d, n_paths, n_steps);
    dv and du are (m, n_paths, n_steps).  Everything is kept in memory, so
    this is a diagnostic tool for moderate sizes; the wealth simulation
    streams the same draws instead of materializing them.
    """

    t0: float
    step: float
    n_steps: int
    n_paths: int
    seed: int
    y: np.ndarray
    dw: np.ndarray
    dv: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        for arr in (self.y, self.dw, self.dv, self.du):
            arr.setflags(write=False)


def factor_block_steps(model: MarketModel, y0: np.ndarray, dts, rng,
                       n_block: int, t0: float = 0.0):
    """Yield (s, dt, y_s, dW, dV, dU, y_next) for one block of factor paths.

    Draw order per step is fixed: the d-dimensional W increment first, then
    the m-dimensional V increment.  dU = rho dV + sqrt(1-rho^2) sigma* dW and
    Y steps by Euler: Y_next = Y + F(s, Y) dt + beta dU.
    """
    cur = np.repeat(y0[:, None], n_block, axis=1)
    root = np.sqrt(1.0 - model.rho ** 2)
    s = t0
    for dt in dts:
        sq = np.sqrt(dt)
        dw = sq * rng.standard_normal((model.d, n_block))
        dv = sq * rng.standard_normal((model.m, n_block))
        du = model.rho * dv + root * (model.sigma_star @ dw)
        drift = model.eval_F(s, cur)
        nxt = cur + drift * dt + model.beta * du
        yield s, dt, cur, dw, dv, du, nxt
        cur = nxt
        s = s + dt


def simulate_factor(model: MarketModel, y0, n_paths: int, step: float,
                    seed: int, horizon: Optional[float] = None,
                    threads: int = 1) -> FactorPaths:
    """Simulate Y by Euler-Maruyama, retaining paths and noise increments."""
    start = np.atleast_1d(np.asarray(y0, dtype=float))
    if start.shape != (model.m,):
        raise ValueError(f"y0 must have {model.m} components")
    span = model.T if horizon is None else horizon
    dts = _time_steps(span, step)
    n_steps = len(dts)

    def worker(b: int, nb: int):
        rng = _substream(seed, b)
        ys = np.empty((model.m, nb, n_steps + 1))
        dws = np.empty((model.d, nb, n_steps))
        dvs = np.empty((model.m, nb, n_steps))
        dus = np.empty((model.m, nb, n_steps))
        ys[:, :, 0] = start[:, None]
        for k, (_, _, _, dw, dv, du, nxt) in enumerate(
                factor_block_steps(model, start, dts, rng, nb)):
            dws[:, :, k] = dw
            dvs[:, :, k] = dv
            dus[:, :, k] = du
            ys[:, :, k + 1] = nxt
        return ys, dws, dvs, dus

    parts = _run_blocks(worker, n_paths, threads)
    return FactorPaths(
        t0=0.0, step=step, n_steps=n_steps, n_paths=n_paths, seed=seed,
        y=np.concatenate([p[0] for p in parts], axis=1),
        dw=np.concatenate([p[1] for p in parts], axis=1),
        dv=np.concatenate([p[2] for p in parts], axis=1),
        du=np.concatenate([p[3] for p in parts], axis=1))


DEFAULT_PROBES = ((0.0, 0.0), (0.25, 1.0), (0.25, -1.0), (0.5, 2.0), (0.75, -0.5))


def operator_probe_table(h: GridFunction, model: MarketModel,
                         points=DEFAULT_PROBES, n_paths: int = 100_000,
                         step: float = 1.0 / 2000.0, seed: int = 0,
                         threads: int = 1) -> list[dict]:
    """Compare the PDE fixed point against the Monte Carlo functional.

    At a fixed point, applying the expectation functional to h returns h
    itself, so interpolate(h, t, y) is the PDE-side prediction for the
    Monte Carlo estimate of the functional at (t, y).
    """
    rows = []
    for t, *ys in points:
        y = np.asarray(ys, dtype=float)
        pde = float(h.sample(t, y))
        est = mc_operator_value(h, model, t, y, n_paths, step, seed, threads=threads)
        z = (est.value - pde) / est.stderr if est.stderr > 0 else 0.0
        rows.append({"t": t, "y": y, "pde": pde, "mc": est.value,
                     "stderr": est.stderr, "z": z, "out_of_box": est.out_of_box})
    return rows
