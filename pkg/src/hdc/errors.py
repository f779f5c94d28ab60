"""Exception hierarchy shared by all hdc modules."""


class HdcError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HdcError):
    """Operand shapes do not conform."""


class ConfigError(HdcError):
    """A configuration object violates its invariants."""


class DegenerateRowError(HdcError):
    """A row norm fell below the normalization guard epsilon."""


class PairIndexError(HdcError):
    """A pair references a row outside the embedding matrix."""


class NumericError(HdcError):
    """A computation produced a non-finite value."""


class EmptySelectionError(HdcError):
    """Hard-example selection was asked to rank an empty loss list."""


class NoNegativePairsError(HdcError):
    """A batch contains a single class, so no negative pairs exist."""


class ConsistencyError(HdcError):
    """Caches and selections passed to backward come from different passes."""


class ParseError(HdcError):
    """A data or config file could not be parsed."""


class SamplingError(HdcError):
    """The dataset cannot supply the requested class-balanced batch."""


class CheckpointError(HdcError):
    """Base class for checkpoint load failures."""


class MalformedCheckpointError(CheckpointError):
    """Checkpoint file is truncated or structurally invalid."""


class CheckpointShapeError(CheckpointError):
    """Checkpoint tensors do not match the configuration they declare."""


class EvalError(HdcError):
    """Evaluation preconditions violated (empty db, missing pairs, ...)."""


class DegenerateDistributionError(EvalError):
    """Both distance distributions have zero variance."""


class TrainingAbort(HdcError):
    """Training hit a non-finite loss; carries the offending iteration."""

    def __init__(self, message: str, iteration: int, batch_indices=None):
        super().__init__(message)
        self.iteration = iteration
        self.batch_indices = batch_indices
