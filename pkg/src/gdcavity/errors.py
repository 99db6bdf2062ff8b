class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class NumericalError(RuntimeError):
    """A computation left its numerical validity range (e.g. norm drift)."""
