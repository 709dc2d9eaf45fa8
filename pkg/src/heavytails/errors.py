"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError subclasses map to exit
code 2, NumericError to exit code 3.
"""


class HeavyTailsError(Exception):
    """Base class for all package errors."""


class ConfigError(HeavyTailsError):
    """Invalid user-supplied configuration or parameters."""


class ParameterError(ConfigError):
    """A numeric parameter is outside its valid domain."""


class UnsupportedConfigurationError(ConfigError):
    """A structurally valid configuration the implementation does not cover."""


class ScheduleInconsistencyError(ConfigError):
    """Schedule cross-scales produce a negative posterior variance."""


class SingularParameterizationError(ConfigError):
    """A parameterization is undefined at the requested point (e.g. mu_t = 0)."""


class SdeConsistencyError(ConfigError):
    """(f, g, beta, sigma12) violate the discrete SDE consistency condition."""


class NumericError(HeavyTailsError):
    """A numerical computation failed (divergent integral, NaN states, ...)."""
