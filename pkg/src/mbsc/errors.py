"""Exception hierarchy shared across the package.

Three broad families matter for the CLI exit-code mapping: usage problems,
data problems (bad input files, out-of-range samples), and stream problems
(anything wrong with a compressed bitstream).
"""


class MbscError(Exception):
    """Base class for all package errors."""


class UsageError(MbscError):
    """Invalid combination of options or arguments."""


class DataError(MbscError):
    """Problems with user-supplied signal or layout data."""


class SampleOutOfRange(DataError):
    pass


class ConfigMismatch(DataError):
    pass


class RaggedRows(DataError):
    pass


class NonInteger(DataError):
    pass


class OutOfDeclaredRange(DataError):
    pass


class SizeNotMultiple(DataError):
    pass


class MissingSidecarField(DataError):
    pass


class InvalidLayout(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class SingularSystem(DataError):
    """Rank-deficient normal equations with regularization disabled."""


class StreamError(MbscError):
    """Problems with a compressed bitstream."""


class EndOfStream(StreamError):
    """Fewer bits remain than a read requested."""


class MalformedStream(StreamError):
    pass


class BadMagic(MalformedStream):
    pass


class VersionUnsupported(MalformedStream):
    pass
