"""Exception hierarchy.

Errors are grouped by what the CLI does with them: data errors map to exit
code 3, configuration errors to 2 and invariant violations to 4.
"""


class EvharError(Exception):
    """Base class for all package errors."""


class DataError(EvharError, ValueError):
    """Input data cannot be used (malformed files, bad manifests, empty streams)."""


class ConfigError(EvharError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class InvariantViolation(EvharError, RuntimeError):
    """An internal consistency check failed."""


# event I/O


class EventIOError(DataError):
    pass


class UnsupportedFormat(EventIOError):
    pass


class TruncatedRecord(EventIOError):
    pass


class MonotonicityViolation(EventIOError):
    pass


class AddressOutOfRange(EventIOError):
    pass


class MalformedLine(EventIOError):
    pass


class UnencodableEvent(EventIOError):
    pass


# simulation / frames / features


class DegenerateVideo(DataError):
    pass


class EmptyStream(DataError):
    pass


class MapTooSmall(DataError):
    pass


class GeometryMismatch(DataError):
    pass


# bag of words / classification


class NoFeatures(DataError):
    pass


class TooFewSamples(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SingleClass(DataError):
    pass


class DegenerateFeatures(DataError):
    pass


class EmptyTrainSet(DataError):
    pass


class MissingGroup(DataError):
    pass


class ManifestError(DataError):
    pass
