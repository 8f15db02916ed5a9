"""Exception hierarchy shared by every stage.

The CLI maps the three top-level families onto exit codes:
``ConfigError`` -> 1, ``DataError`` -> 2, ``DependencyError`` -> 3.
"""


class AugkitError(Exception):
    exit_code = 2


class ConfigError(AugkitError):
    exit_code = 1


class DataError(AugkitError):
    exit_code = 2


class FormatError(DataError):
    """Malformed file contents (bad header, truncated records, ...)."""


class UnsupportedFormatError(FormatError):
    """Well-formed file in a variant we refuse to handle (stereo, 24-bit, ...)."""


class DomainError(DataError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class TooShortError(DomainError):
    pass


class NamingError(DataError):
    """Generated identifiers collide with existing ones."""


class MissingIdError(DataError, KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"unresolved id(s): {', '.join(self.ids[:10])}"
                         + (" ..." if len(self.ids) > 10 else ""))

    def __str__(self):
        return self.args[0]


class DependencyError(AugkitError):
    """An upstream stage output is missing."""
    exit_code = 3
