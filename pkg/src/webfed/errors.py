"""Exception hierarchy shared by all webfed modules."""


class WebFedError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WebFedError):
    """Invalid configuration value (unknown architecture, bad bound, ...)."""


class DimensionError(WebFedError):
    """Tensor/bundle structure mismatch."""


class DataError(WebFedError):
    """Invalid dataset or labels (empty shard, non-one-hot targets, ...)."""


class FormatError(WebFedError):
    """IDX byte stream has a wrong magic number."""


class LengthError(WebFedError):
    """IDX byte stream is truncated or has trailing garbage."""


class ConsistencyError(WebFedError):
    """IDX image/label files disagree on the sample count."""


class ParseError(WebFedError):
    """Wire frame is not valid JSON."""


class ProtocolError(WebFedError):
    """Wire frame violates the protocol (unknown type, version mismatch, ...)."""


class SchemaError(WebFedError):
    """Wire frame is missing a field or carries a field of the wrong kind."""


class CodecError(WebFedError):
    """Tensor payload cannot be decoded (bad base64, length/shape mismatch)."""


class AggregationError(WebFedError):
    """Aggregation called with no usable updates."""


class RoundFailedError(WebFedError):
    """A federation round produced zero updates even after a retry."""


class RenderError(WebFedError):
    """Chart rendering was asked to plot unusable inputs."""
