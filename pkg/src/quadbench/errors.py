"""Exception types shared across the package."""


class QuadbenchError(Exception):
    """Base class for all quadbench errors."""


class NonFiniteStateError(QuadbenchError):
    """A state, input or parameter contains NaN or infinity."""


class IntegrationDivergedError(QuadbenchError):
    """An integration step produced a non-finite value.

    Attributes:
        field: name of the state field that went non-finite.
    """

    def __init__(self, field: str):
        super().__init__(f"integration diverged in field '{field}'")
        self.field = field


class DegenerateRotationError(QuadbenchError):
    """A matrix with non-positive determinant cannot be projected onto SO(3)."""


class EpisodeOverError(QuadbenchError):
    """step() was called on an environment whose episode already terminated."""


class ShapeError(QuadbenchError):
    """An input vector does not match the expected network width."""


class NoForwardCacheError(QuadbenchError):
    """backward() needs the cache produced by a matching forward pass."""


class NotEnoughDataError(QuadbenchError):
    """The replay buffer holds fewer transitions than one batch."""


class DivergedTrainingError(QuadbenchError):
    """A training update produced a non-finite loss; last checkpoint is kept."""


class EmptyRunError(QuadbenchError):
    """Metrics requested for a run log with no samples."""


class NotPeriodicError(QuadbenchError):
    """Average speed is only defined for periodic trajectory kinds."""


class MissingArtifactError(QuadbenchError):
    """A required checkpoint or log file does not exist on disk."""
