"""Exception hierarchy."""


class PolyManifoldError(Exception):
    """Base class for all package errors."""


class InputError(PolyManifoldError, ValueError):
    """Rejected input: wrong shape, non-finite entries, out-of-range args."""


class FormatError(PolyManifoldError, ValueError):
    """A matrix or model file does not follow the on-disk format."""


class TruncatedFileError(FormatError):
    """The file ends before the payload its header declares."""


class InstabilityError(PolyManifoldError, RuntimeError):
    """Time integration blew up."""


class IllPosedError(PolyManifoldError, ValueError):
    """A linear system is singular and no regularization was given."""


class DegenerateProblemError(PolyManifoldError, ValueError):
    """The problem data carries no information (e.g. an all-zero product)."""
