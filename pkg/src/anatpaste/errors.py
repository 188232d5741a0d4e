"""Exception types shared across the package.

Most contract violations derive from ValueError so callers that only know
numpy conventions can still catch them; the package-specific base class lets
the CLI map failures to exit codes.
"""


class AnatPasteError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionsError(AnatPasteError, ValueError):
    """Image/mask/vector shapes are empty or inconsistent."""


class InvalidArgumentError(AnatPasteError, ValueError):
    """A scalar parameter is outside its documented domain."""


class InvalidPlacementError(AnatPasteError, ValueError):
    """A rectangle or shape bounding box does not fit inside the frame."""


class DegenerateHistogramError(AnatPasteError):
    """All pixels fall into a single histogram bin; no threshold exists."""


class NoLungRegionError(AnatPasteError):
    """The supplied lung mask has no foreground pixels."""


class NoValidPlacementError(AnatPasteError):
    """Rejection sampling exhausted its attempt budget."""


class EmptyDatasetError(AnatPasteError, ValueError):
    """A training set with zero images was supplied."""


class EmptyReferenceSetError(AnatPasteError, ValueError):
    """KDE fitting requires at least one reference vector."""


class EmptyQuerySetError(AnatPasteError, ValueError):
    """Scoring requires at least one query vector."""


class MisalignedEnsembleError(AnatPasteError, ValueError):
    """Score sets being ensembled do not share the same ids."""


class SingleClassError(AnatPasteError, ValueError):
    """ROC/AUC need both a normal and an abnormal example."""


class UndefinedF1Error(AnatPasteError, ValueError):
    """F1 maximisation needs at least one abnormal example."""


class GenerationFailedError(AnatPasteError):
    """Phantom geometry sampling failed within the retry budget."""


class ConfigError(AnatPasteError, ValueError):
    """Configuration file is malformed or contains unknown keys."""


class ParseError(AnatPasteError, ValueError):
    """A CSV/data file violates its documented schema."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
