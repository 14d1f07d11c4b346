"""
Exception types raised by the HDP-HSMM library.

Library code raises these; the CLI and the chain runner catch them and turn
them into tagged console messages and exit codes.
"""


class HSMMError(Exception):
    """Base class for every library error."""


class InvalidParameterError(HSMMError, ValueError):
    """A distribution parameter is outside its valid range."""


class DomainError(HSMMError, ValueError):
    """An argument lies outside the domain of a function (e.g. duration < 1)."""


class EmptySupportError(HSMMError, ValueError):
    """A categorical draw was requested from a distribution with no mass."""


class InvalidConfigError(HSMMError, ValueError):
    """A run or sampler configuration failed validation."""


class UnknownExperimentError(InvalidConfigError):
    """An experiment id is not one of the known synthetic datasets."""


class DegeneratePosteriorError(HSMMError, RuntimeError):
    """A conditional posterior has no support after conditioning."""


class ImpossibleEvidenceError(HSMMError, RuntimeError):
    """The observations have zero probability under the current model."""


class DegenerateAugmentationError(HSMMError, RuntimeError):
    """Auxiliary self-transition counts cannot be drawn (pi_jj == 1)."""
