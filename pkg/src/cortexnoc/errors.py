"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UsageError(ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class SimulationFault(RuntimeError):
    """The network stopped making progress (watchdog) or a drain timed out."""


class ProtocolError(RuntimeError):
    """A drain-barrier message arrived out of order or for a stale tag."""
