"""Exception types shared across the package."""


class CapabilityError(RuntimeError):
    """An operation was requested that the manifold does not support."""


class AntipodalError(ValueError):
    """The minimizing geodesic between the two points is not unique."""


class ConfigError(ValueError):
    """A run configuration is invalid or inconsistent."""


class ResourceError(RuntimeError):
    """A request was refused because it would exceed a resource guard rail."""


class InfeasibleIterateError(RuntimeError):
    """An iterate drifted off the manifold beyond the run tolerance."""
