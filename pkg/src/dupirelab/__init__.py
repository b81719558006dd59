"""Functional Itô calculus laboratory for càdlàg jump-diffusion paths."""
from . import clark, decompose, functionals, jumps, models, pathspace, regcalc
from .errors import BudgetError, ConfigError, ContractError, DomainError, GridMismatchError, NumericError
from .pathspace import CadlagPath, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "CadlagPath", "ConfigError", "ContractError", "DomainError", "GridMismatchError",
    "NumericError", "TimeGrid", "clark", "decompose", "functionals", "jumps", "models", "pathspace",
    "regcalc", "__version__",
]
