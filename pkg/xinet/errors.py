"""
Errors
======
Exception hierarchy shared by every module.

The CLI maps each family to an exit code:
- ConfigError, UsageError -> 2
- DataFormatError, DataNotFoundError, CheckpointError -> 3
- NumericError -> 4
"""


class XiNetError(Exception):
    """Base class for all Xi-Net errors."""
    kind = 'error'
    exit_code = 1


class ShapeError(XiNetError, ValueError):
    """Tensor shapes are incompatible for an operation."""
    kind = 'shape'
    exit_code = 2


class ConfigError(XiNetError, ValueError):
    """A configuration value violates its constraints."""
    kind = 'config'
    exit_code = 2


class UsageError(XiNetError, ValueError):
    """The command line could not be parsed."""
    kind = 'usage'
    exit_code = 2


class DataFormatError(XiNetError):
    """A file could not be parsed."""
    kind = 'data'
    exit_code = 3

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ': '
        super().__init__(f"{location}{message}")


class DataNotFoundError(XiNetError, FileNotFoundError):
    """A referenced file does not exist."""
    kind = 'not_found'
    exit_code = 3


class NumericError(XiNetError):
    """NaN/Inf appeared or a filter section is unstable."""
    kind = 'numeric'
    exit_code = 4


class CheckpointError(XiNetError):
    """A checkpoint file is malformed or does not match the model."""
    kind = 'checkpoint'
    exit_code = 3


class VariantMismatchError(CheckpointError):
    """A checkpoint was written for another model variant."""
    kind = 'variant_mismatch'
