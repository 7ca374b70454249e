"""Contraction-bound ledger for the fixed-point iteration.

Every constant used by the convergence analysis is assembled here from the
sampled sup-estimates (Q_star, D_star, alpha_star) and the model scalars.
The chain, for q in {1, 2}:

    phi_tilde_q = q (Q* + beta^2 a*/2) + (2 m^2 + 1) q^2 a*^2 / beta^2
    phi_q       = sqrt(2) exp(T phi_tilde_q)
    iota_q      = q a* (beta^-2 + T)
    Psi*        = sqrt(T a* + (T D* + T a*(a* + 1 + beta^2/2) + a*/beta^2)^2)
    iota~       = beta^2 T (max(iota_1, iota_2) + a*)^2
    H*          = 2 max(2 phi_1 (iota_1 + a*) + Psi* sqrt(phi_2),
                        1/(beta sqrt(2 pi))) exp(iota~ / 2)
    r0          = exp(Q* T) + (exp(Q* T) - 1)/(Q* q*)     (1 + T/q* as Q* -> 0)
    r*          = r0 + m (H*/q* (2 sqrt(T) + T) + D* T exp((a* + Q*) T))
    L*          = (1 + r* q* + T D*) exp(a* T)
    kappa       = Q* + zeta + 1 + m L*
    lambda      = (1 + m L*) / (zeta + 1 + m L*)
    B*          = exp(kappa T) (1 + r*) / (1 - lambda)
    C*          = (1 + r*) exp((Q* + 1 + m L*) T)
    T~          = (1 + m L*) T
    B1*         = gamma1 beta eps sqrt(1 - rho^2) |sigma*|_F r* + q*

The iterate gap after n steps is bounded by B* lambda^n for any fixed
weight zeta > 0; optimising the weight per n gives the super-geometric
envelope U*_n = C* exp(g_n(x*_n)) with

    g_n(x)  = x T~ - ln x - (n - 1) ln(1 + x),
    x*_n    = (sqrt((T~ - n)^2 + 4 T~) + n - T~) / (2 T~),

the unique positive root of T~ x^2 + (T~ - n) x - 1 = 0.  The constants
are deliberately conservative; they may overflow to +inf for large
T * a*, which is recorded as a warning and keeps every bound valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ConditionReport, MarketModel


@dataclass(frozen=True)
class BoundsLedger:
    # sampled inputs and model scalars
    Q_star: float
    D_star: float
    alpha_star: float
    q_star: float
    T: float
    m: int
    beta: float
    rho: float
    gamma: float
    # intermediate constants
    phi_1: float
    phi_2: float
    iota_1: float
    iota_2: float
    Psi_star: float
    iota_tilde: float
    H_star: float
    r0: float
    r_star: float
    L_star: float
    # metric weight and rates
    zeta: float
    kappa: float
    lam: float
    B_star: float
    C_star: float
    T_tilde: float
    B1_star: float
    warnings: tuple = field(default=())
    notes: tuple = field(default=())

    def to_dict(self) -> dict:
        out = {
            "Q_star": self.Q_star, "D_star": self.D_star, "alpha_star": self.alpha_star,
            "q_star": self.q_star, "T": self.T, "m": self.m, "beta": self.beta,
            "rho": self.rho, "gamma": self.gamma,
            "phi_1": self.phi_1, "phi_2": self.phi_2,
            "iota_1": self.iota_1, "iota_2": self.iota_2,
            "Psi_star": self.Psi_star, "iota_tilde": self.iota_tilde,
            "H_star": self.H_star, "r0": self.r0, "r_star": self.r_star,
            "L_star": self.L_star, "zeta": self.zeta, "kappa": self.kappa,
            "lambda": self.lam, "B_star": self.B_star, "C_star": self.C_star,
            "T_tilde": self.T_tilde, "B1_star": self.B1_star,
            "warnings": list(self.warnings), "notes": list(self.notes),
        }
        return out

    def gap_bound(self, n: int) -> float:
        """Geometric iterate-gap bound B* lambda^n for this ledger's weight."""
        return self.B_star * self.lam**n


def compute_ledger(report: ConditionReport, model: MarketModel, zeta: float) -> BoundsLedger:
    """Assemble the full bound chain for a given metric weight zeta > 0."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    Q, D, a = report.Q_star, report.D_star, report.alpha_star
    T, m, beta = model.T, model.m, model.beta
    q_star = model.q_star
    warnings: list[str] = []
    notes = [
        "iota_tilde uses beta^2*T*(max(iota_1, iota_2) + alpha_star)^2; a sharper "
        "variant replaces max(iota_1, iota_2) by max(iota_1, iota_2/2) + alpha_star "
        "before squaring. The conservative form is used.",
    ]

    with np.errstate(over="ignore"):
        phi = {}
        iota = {}
        for q in (1, 2):
            phi_tilde = q * (Q + beta**2 * a / 2.0) + (2.0 * m**2 + 1.0) * q**2 * a**2 / beta**2
            phi[q] = float(np.sqrt(2.0) * np.exp(T * phi_tilde))
            iota[q] = q * a * (beta**-2 + T)
        Psi_star = math.sqrt(T * a + (T * D + T * a * (a + 1.0 + beta**2 / 2.0) + a / beta**2) ** 2)
        iota_tilde = beta**2 * T * (max(iota[1], iota[2]) + a) ** 2
        H_star = float(2.0 * max(2.0 * phi[1] * (iota[1] + a) + Psi_star * np.sqrt(phi[2]),
                                 1.0 / (beta * math.sqrt(2.0 * math.pi))) * np.exp(iota_tilde / 2.0))

        eQT = float(np.exp(Q * T))
        if Q == 0.0:
            r0 = 1.0 + T / q_star
        else:
            r0 = eQT + float(np.expm1(Q * T)) / (Q * q_star)
        r_star = r0 + m * (H_star / q_star * (2.0 * math.sqrt(T) + T)
                           + D * T * float(np.exp((a + Q) * T)))
        L_star = float((1.0 + r_star * q_star + T * D) * np.exp(a * T))
        kappa = Q + zeta + 1.0 + m * L_star
        lam = (1.0 + m * L_star) / (zeta + 1.0 + m * L_star)
        B_star = float(np.exp(kappa * T) * (1.0 + r_star) / (1.0 - lam))
        C_star = float((1.0 + r_star) * np.exp((Q + 1.0 + m * L_star) * T))
        T_tilde = (1.0 + m * L_star) * T
        frob = float(np.sqrt(np.sum(model.sigma_star**2)))
        B1_star = model.gamma1 * beta * model.eps * math.sqrt(1.0 - model.rho**2) * frob * r_star + q_star

    values = {"phi_1": phi[1], "phi_2": phi[2], "H_star": H_star, "r_star": r_star,
              "L_star": L_star, "B_star": B_star, "C_star": C_star, "T_tilde": T_tilde,
              "B1_star": B1_star, "kappa": kappa}
    for name, value in values.items():
        if math.isinf(value):
            warnings.append(f"{name} exceeded floating-point range; stored as +inf "
                            "(bounds stay valid, but are uninformative)")

    return BoundsLedger(
        Q_star=Q, D_star=D, alpha_star=a, q_star=q_star, T=T, m=m, beta=beta,
        rho=model.rho, gamma=model.gamma,
        phi_1=phi[1], phi_2=phi[2], iota_1=iota[1], iota_2=iota[2],
        Psi_star=Psi_star, iota_tilde=iota_tilde, H_star=H_star,
        r0=r0, r_star=r_star, L_star=L_star,
        zeta=float(zeta), kappa=kappa, lam=lam,
        B_star=B_star, C_star=C_star, T_tilde=T_tilde, B1_star=B1_star,
        warnings=tuple(warnings), notes=tuple(notes),
    )


def optimal_rate(n: int, ledger: BoundsLedger):
    """Per-n optimised rate: returns (x_star_n, zeta_star_n, g_star_n, U_star_n).

    x_star_n minimises g_n(x) = x T~ - ln x - (n-1) ln(1+x) over x > 0;
    the corresponding weight is zeta_star_n = (1 + m L*) x_star_n and the
    super-geometric gap envelope is U_star_n = C* exp(g_n(x_star_n)).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    T_tilde = ledger.T_tilde
    one_plus_mL = 1.0 + ledger.m * ledger.L_star
    if math.isinf(T_tilde):
        # limiting optimiser: x* -> 0, zeta* -> 1/T, envelope useless
        return 0.0, 1.0 / ledger.T, math.inf, math.inf
    disc = math.sqrt((T_tilde - n) ** 2 + 4.0 * T_tilde)
    if n >= T_tilde:
        x_star = (disc + n - T_tilde) / (2.0 * T_tilde)
    else:
        # conjugate form, stable when T~ >> n
        x_star = 2.0 / (disc + T_tilde - n)
    zeta_star = one_plus_mL * x_star
    g_star = x_star * T_tilde - math.log(x_star) - (n - 1) * math.log1p(x_star)
    log_C = math.log1p(ledger.r_star) + (ledger.Q_star + one_plus_mL) * ledger.T if math.isfinite(ledger.r_star) else math.inf
    with np.errstate(over="ignore"):
        U_star = float(np.exp(log_C + g_star))
    return x_star, zeta_star, g_star, U_star


def rate_table(ledger: BoundsLedger, n_max: int) -> list[dict]:
    """Optimised rate quantities for n = 1 .. n_max, JSON-friendly."""
    rows = []
    for n in range(1, n_max + 1):
        x_n, zeta_n, g_n, U_n = optimal_rate(n, ledger)
        rows.append({"n": n, "x_star": x_n, "zeta_star": zeta_n,
                     "g_star": g_n, "U_star": U_n})
    return rows


def control_gap_bound(n: int, ledger: BoundsLedger) -> float:
    """Bound B1* U*_n on the control gap after n iterations."""
    return ledger.B1_star * optimal_rate(n, ledger)[3]
