"""Exception hierarchy shared by every module."""


class ACNNError(Exception):
    """Base class for all library errors."""


class InvalidArgument(ACNNError, ValueError):
    pass


class NumericError(ACNNError, ArithmeticError):
    pass


class GeometryError(InvalidArgument):
    """Camera configuration produces a ray at/above the horizon or at nadir."""


class ContractViolation(ACNNError, RuntimeError):
    pass


class UninitializedStatistics(ContractViolation):
    pass


class CheckpointError(ACNNError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class MissingBlobError(CheckpointError, FileNotFoundError):
    pass
