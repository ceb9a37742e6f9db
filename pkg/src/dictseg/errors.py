"""Exception taxonomy shared by the whole package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class DictsegError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DictsegError):
    """Invalid configuration value, key, or combination."""


class DimensionError(ConfigError):
    """Shape or extent violates an operation's contract."""


class DataError(DictsegError):
    """Dataset content is invalid (bad label values, missing files)."""


class FormatError(DataError):
    """A serialized file is malformed.

    Carries the byte offset at which parsing failed so corrupt files can
    be located with a hex editor.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NumericalError(DictsegError):
    """A non-finite value appeared where the math requires finite ones."""
