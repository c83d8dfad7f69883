"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable exit-code contract: 1 = validation/argument, 2 = io, 3 = numeric
failure during training.
"""


class DivsynthError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(DivsynthError):
    """A data invariant was violated (bad bundle, bad config, bad shape sets)."""

    exit_code = 1


class ArgumentError(DivsynthError):
    """An operation was called with an out-of-range or inconsistent argument."""

    exit_code = 1


class ShapeError(DivsynthError):
    """Array dimensions do not line up."""

    exit_code = 1


class StateError(DivsynthError):
    """An operation was called before its required state existed."""

    exit_code = 1


class EmptyGroupError(DivsynthError):
    """A centroid update referenced a group with no members."""

    exit_code = 1


class LoadError(DivsynthError):
    """A referenced file is missing or unreadable."""

    exit_code = 2


class WriteError(DivsynthError):
    """An output path cannot be written."""

    exit_code = 2


class TrainingError(DivsynthError):
    """A non-finite value surfaced during optimization."""

    exit_code = 3

    def __init__(self, message, term=None, checkpoint=None):
        if term is not None:
            message = f"{message} (term: {term})"
        if checkpoint is not None:
            message = f"{message}; last good checkpoint: {checkpoint}"
        super().__init__(message)
        self.term = term
        self.checkpoint = checkpoint
