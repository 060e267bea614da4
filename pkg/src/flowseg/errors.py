"""Exception taxonomy shared across the package."""


class FlowsegError(Exception):
    """Base class for all flowseg errors."""


class BadMagic(FlowsegError):
    """First 4 bytes of a .flo file are not the IEEE-754 LE magic 202021.25."""


class TruncatedFile(FlowsegError):
    """File payload is shorter/longer than its header promises, or the header is invalid."""


class NonFinite(FlowsegError):
    """Loaded data contains NaN or Inf."""


class UnsupportedDepth(FlowsegError):
    """PGM maxval does not match the expected bit depth."""


class TooManyInstances(FlowsegError):
    """Label map has more instance IDs than 16-bit PGM can carry."""


class DimensionMismatch(FlowsegError):
    """Two arrays that must share a shape do not."""


class DegenerateImage(FlowsegError):
    """Image too small for the requested operation."""


class TooFewPoints(FlowsegError):
    """Not enough points for the requested neighborhood size."""


class ClusteringDegenerate(FlowsegError):
    """Clustering produced no clusters (all points noise)."""


class EmptyRegion(FlowsegError):
    """Metric region of interest contains no pixels."""


class MissingPair(FlowsegError):
    """Prediction/ground-truth directories do not contain matching file sets."""


class ConfigError(FlowsegError):
    """Malformed or unknown configuration content."""
