"""Common exception base for all pipeline stages."""


class SrlTraceError(Exception):
    """Base class for every error raised by this package."""
