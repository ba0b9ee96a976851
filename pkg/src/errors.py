"""
Error hierarchy for wdsrkit.

Library code raises these; main.py maps them to process exit codes.
"""


class WdsrError(Exception):
    """Base class for all wdsrkit errors."""

    exit_code = 1


class ConfigError(WdsrError):
    """Invalid or unknown configuration key/value."""

    exit_code = 2


class DataError(WdsrError):
    """Unreadable images, broken manifests, missing files."""

    exit_code = 3


class CheckpointError(DataError):
    """Truncated or otherwise corrupt checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


class NumericalError(WdsrError):
    """Non-finite values, zero-norm filters, failed gradient checks."""

    exit_code = 4


class DimensionError(WdsrError, ValueError):
    """Operand shapes do not fit the operation."""

    exit_code = 4


class GraphError(WdsrError, RuntimeError):
    """Misuse of the autograd graph (non-scalar loss, double backward...)."""

    exit_code = 4


class ModeError(WdsrError, RuntimeError):
    """Op called in the wrong train/infer mode, or on unset running stats."""

    exit_code = 4
