"""Exception hierarchy for templadapt."""


class TemplAdaptError(Exception):
    """Base class for all templadapt errors."""


class DimensionMismatch(TemplAdaptError):
    pass


class ZeroNormError(TemplAdaptError):
    pass


class InvalidArgument(TemplAdaptError):
    pass


class ConvergenceFailure(TemplAdaptError):
    """Raised when the solver does not meet the gradient criterion.

    Carries the best iterate found so far in ``classifier``.
    """

    def __init__(self, message, classifier=None):
        super().__init__(message)
        self.classifier = classifier


class EmptyNegativeSet(TemplAdaptError):
    pass


class GalleryTooSmall(TemplAdaptError):
    pass


class AllSameSubject(TemplAdaptError):
    pass


class DegenerateInput(TemplAdaptError):
    pass


class Unachievable(TemplAdaptError):
    pass


class MissingMate(TemplAdaptError):
    pass


class InsufficientSplits(TemplAdaptError):
    pass


class EmptyInput(TemplAdaptError):
    pass


class SubjectOverlapError(TemplAdaptError):
    pass


class InsufficientData(TemplAdaptError):
    pass


class DimensionTooLarge(TemplAdaptError):
    pass


class InvalidConfig(TemplAdaptError):
    pass


class CorruptHeader(TemplAdaptError):
    pass


class VersionMismatch(TemplAdaptError):
    pass


class RangeOverlap(TemplAdaptError):
    pass


class DanglingTemplateRef(TemplAdaptError):
    pass


class IoError(TemplAdaptError):
    pass
