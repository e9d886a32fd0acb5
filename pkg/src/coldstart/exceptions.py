"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/lineage problems exit
with 2, numerical failures with 3.
"""


class ColdstartError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ColdstartError):
    """Invalid configuration, arguments, or artifact format."""


class LineageError(ConfigError):
    """Artifact content-hash chain does not match the supplied files."""


class NumericalError(ColdstartError):
    """Base class for numerical failures (divergence, degenerate kernels...)."""


class IntegrationDivergedError(NumericalError):
    """ODE state became non-finite during integration."""


class TrainingDivergedError(NumericalError):
    """Training loss became non-finite."""


class DegenerateKernelError(NumericalError):
    """Kernel bandwidth so small that a kernel row underflowed to zero."""


class OutOfSupportError(NumericalError):
    """Query point so far from the training data that its kernel row vanishes."""


class EmptyTruncationError(NumericalError):
    """Spectral truncation kept no basis functions."""


class EigensolverError(NumericalError):
    """Eigenvalue solver failed to converge."""
