"""Exception types shared across the toolkit."""


class GanLocalError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(GanLocalError):
    """Operands disagree on array shape or length."""


class MalformedHeader(GanLocalError):
    """Array file does not start with a valid magic/version/header."""


class UnsupportedLayout(GanLocalError):
    """Array file uses a memory layout this toolkit does not read."""


class UnsupportedDtype(GanLocalError):
    """Array file element type is not 32- or 64-bit little-endian float."""


class BadArchive(GanLocalError):
    """Byte stream is not a readable zip archive of array files."""


class DegenerateInput(GanLocalError):
    """Clustering input cannot support the requested cluster count."""


class UnknownCluster(GanLocalError):
    """Referenced cluster id does not exist in the catalog."""


class AlreadyAssigned(GanLocalError):
    """Cluster is already a member of a part."""


class SchemaVersionMismatch(GanLocalError):
    """Persisted catalog manifest is missing fields or has a wrong version."""


class UnknownPart(GanLocalError):
    """Referenced part does not resolve to a catalog part or cluster."""


class MissingLayerAttribution(GanLocalError):
    """Catalog has no attribution matrix for a requested layer."""


class TooFewSamples(GanLocalError):
    """Statistic needs more sample vectors than were provided."""


class DimensionMismatch(GanLocalError):
    """Gaussian statistics live in different dimensions."""
