"""Shared exception types."""


class DimensionError(ValueError):
    """Incompatible array or subspace dimensions."""


class CapacityError(ValueError):
    """Requested message space exceeds what the code space can hold."""


class SchemeError(ValueError):
    """Unsupported multiplexing scheme."""


class FormatError(ValueError):
    """Malformed key, checkpoint, or container file."""
