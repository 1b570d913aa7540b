"""Exception types shared across the package."""


class HstreamError(Exception):
    """Base class for errors raised by this package."""


class TensorFormatError(HstreamError):
    """Tensor file has a bad magic, version, dtype, rank, or dimension."""


class TensorLengthError(HstreamError):
    """Tensor file is truncated or its payload size disagrees with the header."""


class DegenerateHeadError(HstreamError):
    """Head segment is missing or too short to normalize against."""


class DatasetError(HstreamError):
    """Dataset manifest is malformed or references missing files."""
