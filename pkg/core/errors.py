"""Exception hierarchy shared across the store."""

from typing import Optional


class DStoreError(Exception):
    """Base class for all store errors."""


class InvalidConfiguration(DStoreError, ValueError):
    """A configuration value violates its invariant."""


class ConfigFileError(InvalidConfiguration):
    """A key = value config file could not be loaded."""

    def __init__(self, path: str, line: Optional[int], key: Optional[str], reason: str):
        self.path = path
        self.line = line
        self.key = key
        self.reason = reason
        where = f"{path}:{line}" if line else path
        prefix = f"{where}: {key}: " if key else f"{where}: "
        super().__init__(prefix + reason)


class NoRoute(DStoreError):
    """No RGID map entry matches the key."""


class RecordTooLarge(DStoreError):
    """Value exceeds the table's record payload size."""


class CorruptRecord(DStoreError):
    """A stored record failed checksum verification."""

    def __init__(self, key: Optional[int], detail: str = "checksum mismatch"):
        self.key = key
        super().__init__(f"corrupt record for key {key}: {detail}")


class StorageIOError(DStoreError):
    """Stable storage failed to complete an operation."""


class ProtocolError(DStoreError):
    """Connection-level framing or decoding failure."""


class TruncatedFrame(ProtocolError):
    """Frame ended before its declared length."""


class FrameTooLarge(ProtocolError):
    """Declared frame length exceeds the frame cap."""


class UnknownOpcode(ProtocolError):
    """Frame carries an opcode this codec does not know."""


class ScenarioError(DStoreError, ValueError):
    """Simulation scenario failed validation."""


class PlanError(DStoreError):
    """A repartitioning plan is invalid or could not be executed."""


class BrickCrashed(DStoreError):
    """Raised at an armed crash point to kill a simulated brick mid-operation."""

    def __init__(self, step: str):
        self.step = step
        super().__init__(f"brick crashed at {step}")
