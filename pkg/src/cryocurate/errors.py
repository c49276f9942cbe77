"""Exception hierarchy shared across the package."""


class CryocurateError(Exception):
    """Base class for all package errors."""


# --- fetching ---------------------------------------------------------------

class TransportError(CryocurateError):
    """Network failure after retries; distinct from a database miss."""


class NotFoundInAnyDatabase(CryocurateError):
    pass


class UnrecognizedIdFormat(CryocurateError):
    pass


class NotFetched(CryocurateError):
    """Operation requires a structure that was never fetched/cached."""


# --- structure model --------------------------------------------------------

class MalformedStructure(CryocurateError):
    pass


class InvalidRange(CryocurateError):
    pass


# --- archive ----------------------------------------------------------------

class EntryNotFound(CryocurateError):
    pass


class XmlParseError(CryocurateError):
    pass


class BadPattern(CryocurateError):
    pass


class DirectoryNotFound(CryocurateError):
    pass


class NoMatches(CryocurateError):
    pass


class IndexOutOfRange(CryocurateError, IndexError):
    pass


# --- image formats ----------------------------------------------------------

class DecodeError(CryocurateError):
    pass


class BadMagic(DecodeError):
    pass


class UnsupportedMode(DecodeError):
    pass


class TruncatedData(DecodeError):
    pass


class UnsupportedDtype(CryocurateError):
    pass


class StarSyntaxError(DecodeError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class BadNpyHeader(DecodeError):
    pass


class FortranOrderUnsupported(DecodeError):
    pass


# --- dataset ----------------------------------------------------------------

class EmptyDataset(CryocurateError):
    pass


class UnknownClass(CryocurateError):
    pass


class ClassTooSmall(CryocurateError):
    pass


class ShapeMismatch(CryocurateError):
    pass
