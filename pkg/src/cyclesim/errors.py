"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid parameter or configuration value.

    ``key`` names the offending configuration key when there is one.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DivergenceError(FloatingPointError):
    """Integration left the physically meaningful region (e.g. z = p - y > 50)."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class BoundViolationError(DivergenceError):
    """|h| or |s| exceeded 1 beyond the integration tolerance."""
