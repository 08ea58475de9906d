"""Exception hierarchy. Every failure mode raised by the library derives from SynseError."""

from __future__ import annotations


class SynseError(Exception):
    """Base class for all library errors."""


class FormatError(SynseError):
    """A file does not conform to the container format or declares inconsistent geometry."""


class DataError(SynseError):
    """A payload contains invalid values (NaN/Inf); message names the offending row."""


class CatalogError(SynseError):
    """A label id is not present in the class catalog."""


class SplitError(SynseError):
    """A split specification is inconsistent or a class cannot populate its subsets."""


class ShapeError(SynseError):
    """Array dimensions do not agree with the operation's contract."""


class NumericError(SynseError):
    """Non-finite values reached a numeric kernel."""


class VocabularyError(SynseError):
    """A token or class id has no entry in the word-vector / embedding source."""


class DescriptionError(SynseError):
    """An action phrase cannot be decomposed (e.g. it contains no verb)."""


class TableError(SynseError):
    """An embedding table cannot be assembled (e.g. every class is a placeholder)."""


class ParameterError(SynseError):
    """A scalar hyperparameter is out of its legal range."""


class TrainingError(SynseError):
    """A training procedure received degenerate inputs (e.g. an empty example class)."""


class TuningError(SynseError):
    """Hyperparameter tuning received a validation set it cannot score."""


class DegenerateTaskError(SynseError):
    """A classification task with fewer than two classes."""


class MetricError(SynseError):
    """A metric was requested over an empty class."""


class SpecError(SynseError):
    """A synthetic benchmark specification violates its invariants."""


class DivergenceError(SynseError):
    """Training produced a non-finite loss. Carries the epoch and batch index."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConfigError(SynseError):
    """A run configuration failed validation. Carries the offending field path."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ArtifactExistsError(SynseError):
    """A stage refused to overwrite existing artifacts without --force."""
