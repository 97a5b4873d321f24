"""Exception hierarchy shared across the package."""


class NforgeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(NforgeError):
    """Operand shapes do not satisfy an operation's contract."""


class FormatError(NforgeError):
    """A file (IDX, PNM, checkpoint, config) violates its format."""


class ConvergenceError(NforgeError):
    """An iterative solver exhausted its iteration budget."""


class ConfigError(NforgeError):
    """A configuration value or key is invalid."""
