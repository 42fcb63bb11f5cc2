"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (a ``ValueError``);
numerical breakdowns derive from :class:`NumericalError`.  The CLI maps the
two families to exit codes 2 and 3.
"""


class ConfigError(ValueError):
    """Invalid model, chain specification or experiment configuration."""


class NumericalError(RuntimeError):
    """Base class for numerical failures."""


class SingularSystemError(NumericalError):
    """LU factorization met a pivot below the singularity threshold."""


class ConvergenceError(NumericalError):
    """An iterative method did not reach its tolerance within the cap."""


class UnfinishedTrajectoriesError(NumericalError):
    """A Monte Carlo estimate was requested on trajectories that hit the cap."""
