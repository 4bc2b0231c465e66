"""Delayed-acceptance SMC with surrogate calibration and surrogate-first annealing."""

from .accel import USE_NUMBA

__all__ = ["USE_NUMBA"]
__version__ = "0.1.0"
