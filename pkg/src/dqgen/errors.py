"""Exception types shared across the package.

Tensor-level shape/index problems raise plain ValueError / IndexError with
descriptive messages; the classes here cover protocol- and file-level
failures that callers (and the CLI) need to tell apart.
"""


class DqgenError(Exception):
    """Base class; `code` is a short machine-readable tag used by the CLI."""

    code = "error"


class ContractError(DqgenError):
    """A documented precondition was violated by the caller."""

    code = "contract"


class AlignmentError(DqgenError):
    """A character-offset answer span does not line up with token boundaries."""

    code = "alignment"


class ParseError(DqgenError):
    """Malformed input file (carries the offending line number in the message)."""

    code = "parse"


class TrainingError(DqgenError):
    """Optimization produced a non-finite loss; message names epoch and batch."""

    code = "training"


class CheckpointError(DqgenError):
    code = "checkpoint"


class CheckpointVersionError(CheckpointError):
    code = "checkpoint-version"


class CheckpointManifestError(CheckpointError):
    code = "checkpoint-manifest"


class CheckpointTruncatedError(CheckpointError):
    code = "checkpoint-truncated"
