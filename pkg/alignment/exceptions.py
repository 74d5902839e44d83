"""
Error hierarchy for canon_pose.

Every error carries the process exit code the CLI reports for it:
1 usage/configuration, 2 data/format, 3 numeric failure during training.
"""


class CanonPoseError(Exception):
    """Base class for all canon_pose errors."""

    exit_code = 2


class ConfigurationError(CanonPoseError, ValueError):
    """Invalid configuration value or unknown tag."""

    exit_code = 1


class ArgumentError(CanonPoseError, ValueError):
    """Invalid argument to a library operation (empty batch, epoch out of range)."""

    exit_code = 1


class DimensionError(CanonPoseError, ValueError):
    """Array shapes do not match what the operation requires."""


class DataError(CanonPoseError):
    """Input data is unusable (non-finite pixels, bad sample)."""


class DatasetMissingError(DataError):
    """A configured dataset file does not exist."""


class SymmetricPhantomError(DataError):
    """The phantom is (close to) rotationally symmetric, so its angle is unidentifiable."""


class FormatError(DataError):
    """A file does not follow the expected binary format."""


class TruncationError(FormatError):
    def __init__(self, path, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{path}: truncated payload, expected {expected} bytes, found {actual}")


class ChecksumError(FormatError):
    """Stored CRC32 does not match the payload."""


class VersionError(FormatError):
    """Unsupported file format version."""


class CheckpointError(DataError):
    """A checkpoint cannot be read or does not match the model."""


class ResumeError(CheckpointError):
    """A checkpoint cannot be used to resume the configured run."""


class NumericError(CanonPoseError, ArithmeticError):
    """Non-finite activations or losses."""

    exit_code = 3


class TrainingHaltedError(NumericError):
    """Too many consecutive aborted training steps."""
