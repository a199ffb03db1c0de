"""Exception hierarchy for the codec.

Every failure the codec can diagnose is raised as a subclass of
:class:`CodecError`, so callers (and the CLI) can catch one type.
"""


class CodecError(Exception):
    """Base class for all codec errors."""


class ParseError(CodecError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TruncatedInput(CodecError, ValueError):
    pass


class EmptyInput(CodecError, ValueError):
    pass


class MissingAttributes(CodecError, ValueError):
    pass


class RangeError(CodecError, ValueError):
    pass


class ContextIndexError(CodecError, IndexError):
    pass


class BitstreamUnderrun(CodecError):
    pass


class CorruptStream(CodecError):
    pass


class NotAPCCStream(CodecError):
    pass


class VersionError(CodecError):
    pass
