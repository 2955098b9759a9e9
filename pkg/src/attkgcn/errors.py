"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


class NegativeSamplingError(ValueError):
    """The user has interacted with every item, so no negative can be drawn."""
