"""Exception hierarchy. Each family carries the CLI exit code it maps to."""

from typing import Sequence


class BWSNNError(Exception):
    """Base class for every error raised by the simulator."""

    exit_code = 1


# Configuration (exit 2)


class ConfigError(BWSNNError):
    exit_code = 2


class EmptyFamily(ConfigError):
    pass


# File ingestion (exit 3)


class IngestError(BWSNNError):
    exit_code = 3


class BadMagic(IngestError):
    pass


class ChecksumMismatch(IngestError):
    pass


class MalformedInput(IngestError):
    pass


# Network legality and shapes (exit 4)


class NetworkError(BWSNNError):
    exit_code = 4


class ShapeUnderflow(NetworkError):
    pass


class ChannelMismatch(NetworkError):
    pass


class DimensionMismatch(NetworkError):
    pass


class KindMismatch(NetworkError):
    pass


class InvalidWeights(NetworkError):
    pass


class DimMismatchWithConfig(NetworkError):
    pass


class ValueOutOfRange(NetworkError):
    pass


class EmptyCounts(NetworkError):
    pass


class InvalidNetwork(NetworkError):
    """Raised when an operation needs a legal graph and validation found violations."""

    def __init__(self, violations: Sequence):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} network violation(s):\n{lines}")


# Oracle check (exit 5)


class OracleMismatch(BWSNNError):
    exit_code = 5


# Cycle simulation (exit 6)


class SimulationError(BWSNNError):
    exit_code = 6


class StreamOverrun(SimulationError):
    pass


class UnalignableStreams(SimulationError):
    pass


class SimulationStalled(SimulationError):
    pass


class PotentialOverflow(SimulationError):
    pass
