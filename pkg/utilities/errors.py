"""
Exception types shared by every module.

The command line maps them to exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class MeshError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3

    def to_dict(self):
        out = {'error': type(self).__name__, 'message': str(self)}
        for key in ('line', 'field', 'group'):
            value = getattr(self, key, None)
            if value is not None:
                out[key] = value
        return out


class ConfigError(MeshError, ValueError):
    exit_code = 1


class DataError(MeshError, ValueError):
    """Malformed input data. `line` and `field` are set when parsing files."""

    exit_code = 2

    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = 'line %d: %s' % (line, message)
        super().__init__(message)
        self.line = line
        self.field = field


class NumericalError(MeshError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, group=None):
        super().__init__(message)
        self.group = group
