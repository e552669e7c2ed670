"""Exception hierarchy shared across the package."""


class KVFunnelError(Exception):
    """Base class for all errors raised by kvfunnel."""


class ShapeError(KVFunnelError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(KVFunnelError, ValueError):
    """A numeric parameter is outside its valid domain."""


class InputError(KVFunnelError, ValueError):
    """Model input (token ids, sequence length) is invalid."""


class StateError(KVFunnelError, RuntimeError):
    """An object is in a state the operation cannot work with."""


class ConfigError(KVFunnelError, ValueError):
    """A run specification failed to parse or validate.

    ``field`` names the offending key (``section.key``) when known and
    ``line`` carries the 1-based line number for parse errors.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
