"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its stable exit codes, so raising the right class
matters more than the message text.
"""


class BiasforgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(BiasforgeError):
    """Invalid or inconsistent configuration (bad field, missing entry)."""


class DataError(BiasforgeError):
    """Malformed or inconsistent input data (schema, ordering, gaps)."""


class SingularityError(BiasforgeError):
    """A division-by-near-zero guard fired (signal slope, variance, noise)."""


class ParameterDomainError(BiasforgeError):
    """Parameters outside their admissible domain (weights, price, sd)."""


class UndefinedMetricError(BiasforgeError):
    """A metric's denominator group is empty (e.g. no repaid loans)."""


class DegenerateDataError(BiasforgeError):
    """Training data unusable (single class, empty pool)."""


class NumericalError(BiasforgeError):
    """Non-finite value encountered during numerical work."""
