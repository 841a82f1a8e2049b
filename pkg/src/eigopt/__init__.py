"""Gradient-based optimisation of expected information gain bounds."""
from . import autodiff, distributions, kernels
from .errors import (CapabilityError, ConfigError, ContractError, DomainError, EigoptError,
                     NumericalAbort, ParameterError, ShapeError)

__version__ = "0.1.0"

__all__ = [
    "autodiff", "distributions", "kernels", "CapabilityError", "ConfigError", "ContractError",
    "DomainError", "EigoptError", "NumericalAbort", "ParameterError", "ShapeError",
]
