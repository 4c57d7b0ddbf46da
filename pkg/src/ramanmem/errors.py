"""Exception hierarchy.

Validation problems (bad inputs, bad configs) and analysis failures (fits
that do not converge, undefined metrics) are kept apart because the command
line maps them to different exit codes.
"""


class ValidationError(ValueError):
    """Invalid input: malformed state, config, table or argument."""


class InvalidStateError(ValidationError):
    """A matrix that should be a density matrix is not one."""


class ConfigError(ValidationError):
    """Scenario configuration is malformed or physically inconsistent."""


class AnalysisError(RuntimeError):
    """An analysis step could not produce a result."""


class DegenerateDataError(AnalysisError):
    """Data carry no information about the requested quantity."""


class ConvergenceError(AnalysisError):
    """An iterative fit did not converge."""
