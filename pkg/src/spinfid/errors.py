"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
ResourceLimitError -> 3, NumericalError (and subclasses) -> 4.
"""


class ConfigError(ValueError):
    """Invalid lattice/coupling/run configuration."""


class ResourceLimitError(RuntimeError):
    """Requested computation exceeds a documented resource cap."""


class NumericalError(RuntimeError):
    """Numerical failure: drift, NaN, or non-convergence."""


class FitConvergenceError(NumericalError):
    """Tail fit failed to converge or the window is unusable."""


class NoDynamicsError(NumericalError):
    """All couplings vanish: the correlation time is infinite."""
