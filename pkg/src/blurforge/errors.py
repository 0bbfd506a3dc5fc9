"""Exception types raised across the package."""


class BlurforgeError(Exception):
    """Base class for all package errors."""


class SingularityError(BlurforgeError, ValueError):
    """A direction or angle sits on (or too close to) a projection singularity."""


class BehindCameraError(BlurforgeError, ValueError):
    """A rotated ray no longer points in front of the camera."""


class DepthNonPositiveError(BlurforgeError, ValueError):
    pass


class MalformedRowError(BlurforgeError, ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NonMonotonicTimestampsError(BlurforgeError, ValueError):
    pass


class EmptyLogError(BlurforgeError, ValueError):
    pass


class WindowNotCoveredError(BlurforgeError, ValueError):
    pass


class TooFewSamplesError(BlurforgeError, ValueError):
    pass


class MixedStageCountsError(BlurforgeError, ValueError):
    pass


class TraceError(BlurforgeError, ValueError):
    """One or more points of a grid trace failed; ``failures`` maps index -> error."""

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = ", ".join(str(i) for i in sorted(self.failures))
        super().__init__(f"tracing failed for point indices [{idx}]")


class DegenerateCorrespondencesError(BlurforgeError, ValueError):
    pass


class SingularSystemError(BlurforgeError, ValueError):
    pass


class PointAtInfinityError(BlurforgeError, ValueError):
    pass


class DegenerateCornersError(BlurforgeError, ValueError):
    pass


class TooFewNodesError(BlurforgeError, ValueError):
    pass


class DimensionMismatchError(BlurforgeError, ValueError):
    pass


class TooSmallError(BlurforgeError, ValueError):
    pass


class SchemaVersionMismatchError(BlurforgeError, ValueError):
    pass


class MissingFileError(BlurforgeError, OSError):
    pass


class ChecksumMismatchError(BlurforgeError, ValueError):
    pass
