"""Market model with a diffusion stochastic factor.

The market holds one riskless asset with short rate r(t, Y_t), d risky
assets with drift vector mu(t, Y_t) and nondegenerate volatility matrix
sigma(t, Y_t), and an m-dimensional factor Y driven by

    dY_t = F(t, Y_t) dt + beta dU_t,

where U is an m-dimensional Brownian motion correlated with the asset
noise W through U = rho V + sqrt(1 - rho^2) sigma_star W for an
independent Brownian motion V and a constant m x d matrix sigma_star
with sigma_star sigma_star' = I.  Utility of consumption and terminal
wealth is the power x^gamma with gamma in (0, 1).

The solver works on the distorted value representation z = x^gamma h^eps,
which turns the HJB equation into a quasilinear PDE for h with potential

    Q(t, y) = gamma (1 - rho^2 gamma) / (1 - gamma)
              * (r(t, y) + |theta(t, y)|^2 / (2 (1 - gamma)))

and auxiliary factor drift  alpha = F + beta_star sigma_star theta,
where theta = sigma^{-1} (mu - r 1) is the market price of risk and
beta_star = gamma sqrt(1 - rho^2) beta / (1 - gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import CoefficientExpr, DomainError, constant, parse_expression

_DET_TOL = 1e-12


class ModelError(ValueError):
    """Inconsistent model specification."""


class SingularVolatilityError(ArithmeticError):
    """Volatility matrix is numerically singular at an evaluation point."""


def _as_expr(value, dims: int) -> CoefficientExpr:
    if isinstance(value, CoefficientExpr):
        return value
    if isinstance(value, str):
        return parse_expression(value, dims)
    return constant(float(value), dims)


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Immutable model description plus derived solver quantities."""

    d: int
    m: int
    T: float
    gamma: float
    rho: float
    beta: float
    sigma_star: np.ndarray
    r: CoefficientExpr
    mu: tuple
    sigma: tuple  # tuple of d rows, each a tuple of d CoefficientExpr
    F: tuple
    name: str = "custom"
    # optional additive decomposition a[i][l](t, z) of the drift alpha,
    # each entry an expression in (t, y1); used by the condition checks
    alpha_parts: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ModelError("d and m must be at least 1")
        if not self.T > 0:
            raise ModelError("horizon T must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ModelError("gamma must lie in (0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise ModelError("rho must lie in [0, 1]")
        if not self.beta > 0:
            raise ModelError("beta must be positive")
        star = np.asarray(self.sigma_star, dtype=float)
        if star.shape != (self.m, self.d):
            raise ModelError(f"sigma_star must have shape ({self.m}, {self.d})")
        if not np.allclose(star @ star.T, np.eye(self.m), atol=1e-12):
            raise ModelError("sigma_star sigma_star' must equal the identity")
        object.__setattr__(self, "sigma_star", star)
        if len(self.mu) != self.d:
            raise ModelError(f"mu must have {self.d} components")
        if len(self.sigma) != self.d or any(len(row) != self.d for row in self.sigma):
            raise ModelError(f"sigma must be a {self.d} x {self.d} matrix")
        if len(self.F) != self.m:
            raise ModelError(f"F must have {self.m} components")

    # ------------------------------------------------------------------
    # derived scalars
    @property
    def gamma1(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    @property
    def q_star(self) -> float:
        return 1.0 / (1.0 - self.rho**2 * self.gamma)

    @property
    def eps(self) -> float:
        return (1.0 - self.gamma) / (1.0 - self.rho**2 * self.gamma)

    @property
    def beta_star(self) -> float:
        return self.gamma * np.sqrt(1.0 - self.rho**2) * self.beta / (1.0 - self.gamma)

    # ------------------------------------------------------------------
    # vectorised field evaluation; batch shape S comes from broadcasting
    # t against y[1:], vectors are returned with the component axis first
    def eval_r(self, t, y):
        return self.r.evaluate(t, y)

    def eval_mu(self, t, y):
        vals = [np.asarray(e.evaluate(t, y), float) for e in self.mu]
        batch = np.broadcast_shapes(*[v.shape for v in vals])
        return np.array([np.broadcast_to(v, batch) for v in vals])

    def eval_sigma(self, t, y):
        rows = [[np.asarray(e.evaluate(t, y), float) for e in row] for row in self.sigma]
        batch = np.broadcast_shapes(*[v.shape for row in rows for v in row])
        return np.array([[np.broadcast_to(v, batch) for v in row] for row in rows])

    def eval_F(self, t, y):
        vals = [np.asarray(e.evaluate(t, y), float) for e in self.F]
        batch = np.broadcast_shapes(*[v.shape for v in vals])
        return np.array([np.broadcast_to(v, batch) for v in vals])

    def risk_premium(self, t, y):
        """Market price of risk theta = sigma^{-1} (mu - r 1), shape (d,) + S."""
        r = np.asarray(self.eval_r(t, y), float)
        excess = self.eval_mu(t, y) - r  # (d,) + S
        if self.d == 1:
            sig = np.asarray(self.sigma[0][0].evaluate(t, y), float)
            self._check_nondegenerate(np.abs(sig), t, y)
            return excess / sig
        sig = self.eval_sigma(t, y)  # (d, d) + S
        mats = np.moveaxis(sig, (0, 1), (-2, -1))  # S + (d, d)
        self._check_nondegenerate(np.abs(np.linalg.det(mats)), t, y)
        rhs = np.moveaxis(excess, 0, -1)[..., None]  # S + (d, 1)
        theta = np.linalg.solve(mats, rhs)[..., 0]
        return np.moveaxis(theta, -1, 0)

    def _check_nondegenerate(self, magnitude, t, y):
        mag = np.atleast_1d(np.asarray(magnitude, float))
        if np.any(mag <= _DET_TOL):
            idx = int(np.argmin(mag))
            raise SingularVolatilityError(
                f"volatility is singular at evaluation point #{idx} (|det| = {mag.ravel()[idx]:.3g})")

    def potential(self, t, y):
        """Potential Q of the linear pricing PDE, shape S."""
        theta = self.risk_premium(t, y)
        r = np.asarray(self.eval_r(t, y), float)
        pref = self.gamma * (1.0 - self.rho**2 * self.gamma) / (1.0 - self.gamma)
        return pref * (r + np.sum(theta**2, axis=0) / (2.0 * (1.0 - self.gamma)))

    def factor_drift(self, t, y):
        """Auxiliary drift alpha = F + beta_star sigma_star theta, shape (m,) + S."""
        theta = self.risk_premium(t, y)
        drift = self.eval_F(t, y).astype(float, copy=True)
        drift = np.broadcast_to(drift, (self.m,) + theta.shape[1:]).copy()
        drift += self.beta_star * np.einsum("ij,j...->i...", self.sigma_star, theta)
        return drift

    def drift_potential(self, t, y):
        """(alpha, Q) in a single pass, sharing the r/mu/sigma evaluations.

        Path simulations call this once per time step; evaluating the
        coefficients twice through factor_drift and potential doubles their
        cost for nothing.
        """
        r = np.asarray(self.eval_r(t, y), float)
        excess = self.eval_mu(t, y) - r
        if self.d == 1:
            sig = np.asarray(self.sigma[0][0].evaluate(t, y), float)
            self._check_nondegenerate(np.abs(sig), t, y)
            theta = excess / sig
        else:
            sig = self.eval_sigma(t, y)
            mats = np.moveaxis(sig, (0, 1), (-2, -1))
            self._check_nondegenerate(np.abs(np.linalg.det(mats)), t, y)
            rhs = np.moveaxis(excess, 0, -1)[..., None]
            theta = np.moveaxis(np.linalg.solve(mats, rhs)[..., 0], -1, 0)
        pref = self.gamma * (1.0 - self.rho**2 * self.gamma) / (1.0 - self.gamma)
        potential = pref * (r + np.sum(theta**2, axis=0) / (2.0 * (1.0 - self.gamma)))
        drift = self.eval_F(t, y).astype(float, copy=True)
        drift = np.broadcast_to(drift, (self.m,) + theta.shape[1:]).copy()
        drift += self.beta_star * np.einsum("ij,j...->i...", self.sigma_star, theta)
        return drift, potential

    # ------------------------------------------------------------------
    # symbolic derived coefficients (closed-form inverse up to d = 2)
    def theta_exprs(self):
        if self.d == 1:
            return [(self.mu[0] - self.r) / self.sigma[0][0]]
        if self.d == 2:
            s = self.sigma
            det = s[0][0] * s[1][1] - s[0][1] * s[1][0]
            e0 = self.mu[0] - self.r
            e1 = self.mu[1] - self.r
            return [(s[1][1] * e0 - s[0][1] * e1) / det,
                    (s[0][0] * e1 - s[1][0] * e0) / det]
        raise ModelError("closed-form risk premium is only assembled for d <= 2")

    def potential_expr(self) -> CoefficientExpr:
        theta = self.theta_exprs()
        quad = theta[0] * theta[0]
        for component in theta[1:]:
            quad = quad + component * component
        pref = self.gamma * (1.0 - self.rho**2 * self.gamma) / (1.0 - self.gamma)
        return (self.r + quad / (2.0 * (1.0 - self.gamma))) * pref

    def drift_exprs(self):
        theta = self.theta_exprs()
        out = []
        for i in range(self.m):
            acc = self.F[i]
            for j in range(self.d):
                coef = float(self.sigma_star[i, j]) * self.beta_star
                if coef != 0.0:
                    acc = acc + theta[j] * coef
            out.append(acc)
        return out

    def alpha_decomposition(self):
        """Additive split a[i][l](t, z) with alpha_i(t, y) = sum_l a[i][l](t, y_l).

        Supplied by the preset where the structure is known; a single-factor
        model is trivially its own decomposition.  Returns None otherwise.
        """
        if self.alpha_parts is not None:
            return self.alpha_parts
        if self.m == 1:
            return ((self.drift_exprs()[0],),)
        return None


# ----------------------------------------------------------------------
# condition checks


@dataclass(frozen=True)
class ConditionReport:
    """Sampled diagnostics for the standing regularity conditions.

    Statuses are advisory: "pass", "warn" (a bound looks large or had to be
    estimated numerically) or "fail" (a violation was observed at a sample).
    Sup-type constants are estimates from below by sampling; they feed the
    contraction bounds ledger.
    """

    model_name: str
    box: tuple
    n_samples: int
    seed: int
    statuses: dict
    Q_star: float
    D_star: float
    alpha_star: float
    r_sup: float
    mu_sup: float
    sigma_inv_sup: float
    coef_deriv_sup: float
    F_sup: float
    F_deriv_sup: float
    failures: tuple
    notes: tuple

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "box": [list(b) for b in self.box],
            "n_samples": self.n_samples,
            "seed": self.seed,
            "statuses": dict(self.statuses),
            "Q_star": self.Q_star,
            "D_star": self.D_star,
            "alpha_star": self.alpha_star,
            "r_sup": self.r_sup,
            "mu_sup": self.mu_sup,
            "sigma_inv_sup": self.sigma_inv_sup,
            "coef_deriv_sup": self.coef_deriv_sup,
            "F_sup": self.F_sup,
            "F_deriv_sup": self.F_deriv_sup,
            "failures": list(self.failures),
            "notes": list(self.notes),
        }


def _sample_points(T: float, box, n_samples: int, seed: int, m: int):
    """Quasi-uniform samples: an odd tensor lattice plus a seeded uniform fill.

    The lattice pins endpoints and the box centre (so designed degeneracies
    like a volatility vanishing at y = 0 are actually hit); the random fill
    covers the gaps.
    """
    per_dim = max(3, int(round((0.75 * n_samples) ** (1.0 / (m + 1)))))
    if per_dim % 2 == 0:
        per_dim += 1
    axes = [np.linspace(0.0, T, per_dim)]
    axes += [np.linspace(lo, hi, per_dim) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([g.ravel() for g in mesh])  # (m+1, L)
    n_random = max(n_samples - lattice.shape[1], 0)
    rng = np.random.default_rng(seed)
    lows = np.array([0.0] + [lo for lo, _ in box])
    highs = np.array([T] + [hi for _, hi in box])
    randoms = rng.uniform(lows[:, None], highs[:, None], size=(m + 1, n_random))
    points = np.concatenate([lattice, randoms], axis=1)
    return points[0], points[1:]


def check_conditions(model: MarketModel, box, n_samples: int = 4096, seed: int = 0,
                     deriv_cap: float = 1e3) -> ConditionReport:
    """Estimate the sup-constants behind the fixed-point analysis by sampling.

    ``box`` is a sequence of m (low, high) pairs truncating the factor
    domain.  At least 100 samples are required so the sup estimates mean
    something.  Singularities of sigma found at a sample are recorded as
    failures rather than raised.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != model.m:
        raise ModelError(f"box must have {model.m} (low, high) pairs")
    if any(hi <= lo for lo, hi in box):
        raise ModelError("box bounds must satisfy low < high")
    if n_samples < 100:
        raise ModelError("need at least 100 samples")

    ts, ys = _sample_points(model.T, box, n_samples, seed, model.m)
    failures: list[str] = []
    notes: list[str] = []
    statuses = {"a1": "pass", "a2": "pass", "a3": "pass"}

    r_vals = np.asarray(model.eval_r(ts, ys), float)
    mu_vals = model.eval_mu(ts, ys)
    sig_vals = model.eval_sigma(ts, ys)  # (d, d, N)
    mats = np.moveaxis(sig_vals, (0, 1), (-2, -1))
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > _DET_TOL
    if not np.all(ok):
        statuses["a1"] = "fail"
        idx = int(np.argmin(np.abs(dets)))
        failures.append(
            f"a1: volatility singular at t={ts[idx]:.6g}, y={ys[:, idx].round(6).tolist()}"
        )
    if not np.any(ok):
        raise SingularVolatilityError("volatility is singular at every sampled point")

    inv = np.linalg.inv(mats[ok])
    sigma_inv_sup = float(np.max(np.sqrt(np.sum(inv**2, axis=(-2, -1)))))
    r_sup = float(np.max(np.abs(r_vals)))
    mu_sup = float(np.max(np.sqrt(np.sum(mu_vals**2, axis=0))))

    # first partials of the primitive coefficients (A1/A2 smoothness)
    variables = ["t"] + [f"y{i + 1}" for i in range(model.m)]
    coef_deriv_sup = 0.0
    for e in [model.r, *model.mu, *[x for row in model.sigma for x in row]]:
        for var in variables:
            vals = np.asarray(e.differentiate(var).evaluate(ts, ys), float)
            coef_deriv_sup = max(coef_deriv_sup, float(np.max(np.abs(vals))))
    F_vals = model.eval_F(ts, ys)
    F_sup = float(np.max(np.abs(F_vals)))
    F_deriv_sup = 0.0
    for e in model.F:
        for var in variables:
            vals = np.asarray(e.differentiate(var).evaluate(ts, ys), float)
            F_deriv_sup = max(F_deriv_sup, float(np.max(np.abs(vals))))
    if statuses["a1"] == "pass" and (not np.isfinite(coef_deriv_sup) or coef_deriv_sup > deriv_cap):
        statuses["a1"] = "warn"
        notes.append(f"a1: coefficient derivative sup {coef_deriv_sup:.3g} exceeds cap {deriv_cap:.3g}")
    if not np.isfinite(F_deriv_sup) or F_deriv_sup > deriv_cap:
        statuses["a2"] = "warn"
        notes.append(f"a2: factor drift derivative sup {F_deriv_sup:.3g} exceeds cap {deriv_cap:.3g}")

    # potential sup and gradient sup
    t_ok, y_ok = ts[ok], ys[:, ok]
    try:
        q_expr = model.potential_expr()
        q_vals = np.asarray(q_expr.evaluate(t_ok, y_ok), float)
        grads = [np.asarray(q_expr.differentiate(f"y{i + 1}").evaluate(t_ok, y_ok), float)
                 for i in range(model.m)]
        D_star = float(np.max(np.sqrt(sum(g**2 for g in grads))))
    except (ModelError, DomainError) as exc:
        if isinstance(exc, DomainError):
            statuses["a1"] = "fail"
            failures.append(f"a1: potential left its domain at a sample: {exc}")
        q_vals = np.asarray(model.potential(t_ok, y_ok), float)
        D_star = _numeric_gradient_sup(model, t_ok, y_ok, box)
        notes.append("potential gradient estimated by central differences")
    Q_star = float(np.max(q_vals))

    # drift decomposition sup (value and both partials of each part),
    # evaluated on the det-filtered master samples so known singular points
    # do not abort the report
    alpha_star = 0.0
    parts = model.alpha_decomposition()
    if parts is None:
        alpha_star = _numeric_alpha_sup(model, t_ok, y_ok, box)
        statuses["a3"] = "warn"
        notes.append("a3: no additive drift decomposition supplied; sups taken on full components")
    else:
        for i, row in enumerate(parts):
            for l, part in enumerate(row):
                z_part = y_ok[l][None, :]
                try:
                    for e in (part, part.differentiate("t"), part.differentiate("y1")):
                        vals = np.asarray(e.evaluate(t_ok, z_part), float)
                        alpha_star = max(alpha_star, float(np.max(np.abs(vals))))
                except DomainError as exc:
                    statuses["a3"] = "fail"
                    failures.append(f"a3: drift part ({i + 1},{l + 1}) left its domain: {exc}")
    if statuses["a3"] == "pass" and alpha_star > deriv_cap:
        statuses["a3"] = "warn"
        notes.append(f"a3: drift decomposition sup {alpha_star:.3g} exceeds cap {deriv_cap:.3g}")

    return ConditionReport(
        model_name=model.name,
        box=box,
        n_samples=int(ts.size),
        seed=seed,
        statuses=statuses,
        Q_star=Q_star,
        D_star=D_star,
        alpha_star=alpha_star,
        r_sup=r_sup,
        mu_sup=mu_sup,
        sigma_inv_sup=sigma_inv_sup,
        coef_deriv_sup=coef_deriv_sup,
        F_sup=F_sup,
        F_deriv_sup=F_deriv_sup,
        failures=tuple(failures),
        notes=tuple(notes),
    )


def _numeric_gradient_sup(model, ts, ys, box) -> float:
    step = 1e-5 * max(hi - lo for lo, hi in box)
    acc = 0.0
    grads = []
    for i in range(model.m):
        shift = np.zeros((model.m, 1))
        shift[i, 0] = step
        hi_vals = np.asarray(model.potential(ts, ys + shift), float)
        lo_vals = np.asarray(model.potential(ts, ys - shift), float)
        grads.append((hi_vals - lo_vals) / (2.0 * step))
    return float(np.max(np.sqrt(sum(g**2 for g in grads))))


def _numeric_alpha_sup(model, ts, ys, box) -> float:
    step_t = 1e-5 * model.T
    step_y = 1e-5 * max(hi - lo for lo, hi in box)
    alpha = model.factor_drift(ts, ys)
    sup = float(np.max(np.abs(alpha)))
    dt = (model.factor_drift(ts + step_t, ys) - model.factor_drift(ts - step_t, ys)) / (2 * step_t)
    sup = max(sup, float(np.max(np.abs(dt))))
    for i in range(model.m):
        shift = np.zeros((model.m, 1))
        shift[i, 0] = step_y
        dy = (model.factor_drift(ts, ys + shift) - model.factor_drift(ts, ys - shift)) / (2 * step_y)
        sup = max(sup, float(np.max(np.abs(dy))))
    return sup


# ----------------------------------------------------------------------
# presets


def preset(name: str, **overrides) -> MarketModel:
    """Build one of the bundled models.

    ``paper-example``    single asset, single factor, trigonometric
                         coefficients; accepts gamma/rho/beta/T overrides.
    ``merton-constant``  constant coefficients (classic Merton benchmark);
                         accepts r/mu/sigma/F/gamma/rho/beta/T overrides.
    ``two-asset-sv``     two assets with per-factor stochastic volatilities
                         sigma_i(t, y_i) and collinearity parameters b1 != b2.
    """
    builders = {
        "paper-example": _paper_example,
        "merton-constant": _merton_constant,
        "two-asset-sv": _two_asset_sv,
    }
    if name not in builders:
        raise ModelError(f"unknown preset {name!r}; expected one of {sorted(builders)}")
    return builders[name](**overrides)


def _scalar_overrides(overrides, allowed, where):
    extra = set(overrides) - set(allowed)
    if extra:
        raise ModelError(f"{where} does not accept override(s) {sorted(extra)}")
    return {k: float(v) for k, v in overrides.items()}


def _paper_example(**overrides) -> MarketModel:
    kw = _scalar_overrides(overrides, {"gamma", "rho", "beta", "T"}, "paper-example")
    return MarketModel(
        d=1, m=1,
        T=kw.get("T", 1.0),
        gamma=kw.get("gamma", 0.75),
        rho=kw.get("rho", 0.5),
        beta=kw.get("beta", 1.0),
        sigma_star=np.ones((1, 1)),
        r=parse_expression("0.01*(1+0.5*sin(y*t))", 1),
        mu=(parse_expression("0.02*(1+0.5*sin(y*t))", 1),),
        sigma=((parse_expression("0.5+sin(y*t)^2", 1),),),
        F=(parse_expression("0.1*sin(y*t)", 1),),
        name="paper-example",
    )


def _merton_constant(**overrides) -> MarketModel:
    kw = _scalar_overrides(overrides, {"r", "mu", "sigma", "F", "gamma", "rho", "beta", "T"},
                           "merton-constant")
    sigma = kw.get("sigma", 0.5)
    if sigma == 0.0:
        raise ModelError("sigma must be nonzero")
    return MarketModel(
        d=1, m=1,
        T=kw.get("T", 1.0),
        gamma=kw.get("gamma", 0.75),
        rho=kw.get("rho", 0.5),
        beta=kw.get("beta", 1.0),
        sigma_star=np.ones((1, 1)),
        r=constant(kw.get("r", 0.01), 1),
        mu=(constant(kw.get("mu", 0.02), 1),),
        sigma=((constant(sigma, 1),),),
        F=(constant(kw.get("F", 0.0), 1),),
        name="merton-constant",
    )


def _two_asset_sv(**overrides) -> MarketModel:
    allowed = {"b1", "b2", "r", "mu1", "mu2", "sigma1", "sigma2", "F1", "F2",
               "gamma", "rho", "beta", "T"}
    extra = set(overrides) - allowed
    if extra:
        raise ModelError(f"two-asset-sv does not accept override(s) {sorted(extra)}")
    b1 = float(overrides.get("b1", 0.0))
    b2 = float(overrides.get("b2", 1.0))
    if b1 == b2:
        raise ModelError("two-asset-sv needs b1 != b2 for a nondegenerate volatility matrix")
    r = float(overrides.get("r", 0.01))
    mu1 = float(overrides.get("mu1", 0.02))
    mu2 = float(overrides.get("mu2", 0.02))
    sigma1 = _as_expr(overrides.get("sigma1", "0.6+0.2*tanh(y1)"), 2)
    sigma2 = _as_expr(overrides.get("sigma2", "0.8+0.2*tanh(y2)"), 2)
    F1 = _as_expr(overrides.get("F1", "0.05*sin(y1)"), 2)
    F2 = _as_expr(overrides.get("F2", "0.05*sin(y2)"), 2)
    gamma = float(overrides.get("gamma", 0.75))
    rho = float(overrides.get("rho", 0.5))
    beta = float(overrides.get("beta", 1.0))
    T = float(overrides.get("T", 1.0))

    model = MarketModel(
        d=2, m=2, T=T, gamma=gamma, rho=rho, beta=beta,
        sigma_star=np.eye(2),
        r=constant(r, 2),
        mu=(constant(mu1, 2), constant(mu2, 2)),
        sigma=((sigma1, sigma1 * b1), (sigma2, sigma2 * b2)),
        F=(F1, F2),
        name="two-asset-sv",
    )
    # alpha_i = F_i(t, y_i) + beta_star (bt_{1,i}/sigma1(t,y1) + bt_{2,i}/sigma2(t,y2))
    db = b2 - b1
    bt = np.array([[b2 * (mu1 - r) / db, -(mu1 - r) / db],
                   [-b1 * (mu2 - r) / db, (mu2 - r) / db]])  # bt[l, i]
    s_local = (sigma1.renamed({"y1": "y1"}), sigma2.renamed({"y2": "y1"}))
    F_local = (F1.renamed({"y1": "y1"}), F2.renamed({"y2": "y1"}))
    beta_star = model.beta_star
    parts = []
    for i in range(2):
        row = []
        for l in range(2):
            part = (beta_star * bt[l, i]) / s_local[l]
            if i == l:
                part = part + F_local[i]
            row.append(part)
        parts.append(tuple(row))
    return MarketModel(
        d=2, m=2, T=T, gamma=gamma, rho=rho, beta=beta,
        sigma_star=np.eye(2),
        r=constant(r, 2),
        mu=(constant(mu1, 2), constant(mu2, 2)),
        sigma=((sigma1, sigma1 * b1), (sigma2, sigma2 * b2)),
        F=(F1, F2),
        name="two-asset-sv",
        alpha_parts=tuple(parts),
    )
