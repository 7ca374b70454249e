"""Fixed-point solver for optimal investment and consumption with a
diffusion factor driving all market coefficients.

The pipeline: describe a market with ``MarketModel`` (or grab a ``preset``),
discretize with ``Grid``, run ``solve_fixed_point`` to get the reduced value
function, then derive controls with ``optimal_controls`` and validate with
the Monte Carlo helpers in ``mc``.
"""

__version__ = "0.1.0"

from .bounds import (BoundsLedger, compute_ledger, control_gap_bound,
                     optimal_rate, rate_table)
from .expr import CoefficientExpr, DomainError, ParseError, parse_expression
from .grid import Grid, GridFunction, sup_distance, weighted_distance
from .model import (ConditionReport, MarketModel, ModelError,
                    SingularVolatilityError, check_conditions, preset)
from .solver import (SolveResult, SolverError, apply_operator, hjb_residual,
                     solve_fixed_point)
from .strategy import (HamiltonianReport, StrategyField, WealthSummary,
                       hamiltonian_check, observed_control_gap,
                       optimal_controls, simulate_wealth,
                       strategy_error_bound, value_function)

__all__ = [
    "__version__",
    "BoundsLedger", "compute_ledger", "control_gap_bound", "optimal_rate",
    "rate_table",
    "CoefficientExpr", "DomainError", "ParseError", "parse_expression",
    "Grid", "GridFunction", "sup_distance", "weighted_distance",
    "ConditionReport", "MarketModel", "ModelError", "SingularVolatilityError",
    "check_conditions", "preset",
    "SolveResult", "SolverError", "apply_operator", "hjb_residual",
    "solve_fixed_point",
    "HamiltonianReport", "StrategyField", "WealthSummary", "hamiltonian_check",
    "observed_control_gap", "optimal_controls", "simulate_wealth",
    "strategy_error_bound", "value_function",
]
