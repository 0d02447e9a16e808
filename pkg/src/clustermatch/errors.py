"""Exception types raised across the package."""


class ClusterMatchError(Exception):
    """Base class for all package errors."""


class NonPositiveDepth(ClusterMatchError, ValueError):
    pass


class InvalidIntrinsics(ClusterMatchError, ValueError):
    pass


class InvalidPose(ClusterMatchError, ValueError):
    pass


class EmptyFrame(ClusterMatchError, ValueError):
    pass


class DetectionError(ClusterMatchError, ValueError):
    """A detection inside a frame failed to lift; carries its index."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"detection {index}: {cause}")


class EmptyCluster(ClusterMatchError, ValueError):
    pass


class TooFewPoints(ClusterMatchError, ValueError):
    pass


class DegenerateScaling(ClusterMatchError, ValueError):
    pass


class CholeskyFailure(ClusterMatchError, ValueError):
    pass


class SingularCovariance(ClusterMatchError, ValueError):
    """Covariance cannot be inverted; add padding or assume more noise."""


class DimensionMismatch(ClusterMatchError, ValueError):
    pass


class InvalidConfidence(ClusterMatchError, ValueError):
    pass


class InvalidDof(ClusterMatchError, ValueError):
    pass


class ParseError(ClusterMatchError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyAfterPruning(ClusterMatchError, ValueError):
    pass


class SchemaVersionMismatch(ClusterMatchError, ValueError):
    pass


class ValidationError(ClusterMatchError, ValueError):
    pass


class PairError(ClusterMatchError):
    """Failure while evaluating one (reference, observed) frame pair."""

    def __init__(self, ref_frame, obs_frame, cause):
        self.ref_frame = ref_frame
        self.obs_frame = obs_frame
        self.cause = cause
        super().__init__(f"ref_frame={ref_frame} obs_frame={obs_frame}: {cause}")
