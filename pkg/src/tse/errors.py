"""Exception types shared across the pipeline."""


class TseError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(TseError):
    """A file does not match its declared on-disk format."""


class UnsupportedDepthError(FormatError):
    """A PGM file with a maxval other than 255."""


class ContractError(TseError):
    """An operation was called with arguments that violate its contract."""


class GeometryError(ContractError):
    """Requested phantom geometry cannot be realized."""
