"""Exception types shared across the package."""


class DasmcError(Exception):
    pass


class InvalidWeightsError(DasmcError):
    """Weights are non-finite, negative, all zero, or unnormalised."""


class TemperatureOrderError(DasmcError):
    """Requested temperature does not exceed the current one."""


class DegeneratePopulationError(DasmcError):
    """All particle weights underflowed; the run cannot continue."""


class SingularCovarianceError(DasmcError):
    """Covariance matrix is rank deficient at the pivot tolerance."""


class CacheMissError(DasmcError):
    """A log-density needed at this temperature has not been evaluated."""


class ConfigError(DasmcError):
    """Invalid or inconsistent run configuration."""


class EvaluationError(DasmcError):
    """A log-density evaluation returned a non-finite value where one is required."""
