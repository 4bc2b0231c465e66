"""Concrete model bindings and cost accounting."""

from .arfima import (
    ArfimaModel,
    arfima_autocovariance,
    arfima_exact_loglike,
    arfima_spectral_density,
    pacf_to_poly,
    pacf_transform,
    periodogram,
    poly_to_pacf,
    simulate_arfima,
)
from .cost import CostAccount
from .regression import RegressionModel

__all__ = [
    "ArfimaModel",
    "CostAccount",
    "RegressionModel",
    "arfima_autocovariance",
    "arfima_exact_loglike",
    "arfima_spectral_density",
    "pacf_to_poly",
    "pacf_transform",
    "periodogram",
    "poly_to_pacf",
    "simulate_arfima",
]
