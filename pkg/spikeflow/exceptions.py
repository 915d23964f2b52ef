"""Custom exceptions for spikeflow stages."""

from typing import Optional, Tuple


class SpikeFlowError(Exception):
    """Base exception for all spikeflow errors."""

    def __init__(self, message: str, stage: Optional[str] = None):
        self.message = message
        self.stage = stage
        super().__init__(message)


class EventFormatError(SpikeFlowError):
    """Malformed event record."""

    def __init__(self, message: str, offset: int, stage: Optional[str] = None):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})", stage=stage)


class EventOrderError(SpikeFlowError):
    """Event timestamps go backwards within one stream."""

    def __init__(self, message: str, offset: int, stage: Optional[str] = None):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})", stage=stage)


class EncodeError(SpikeFlowError):
    """Event field does not fit the binary record layout."""

    pass


class StimulusError(SpikeFlowError):
    """Invalid stimulus model parameters."""

    pass


class NeuronConfigError(SpikeFlowError):
    """Neuron parameter set violates its invariants."""

    pass


class CapacityError(SpikeFlowError):
    """Core axon or neuron budget exceeded."""

    def __init__(
        self,
        message: str,
        core: Optional[Tuple[int, int]] = None,
        stage: Optional[str] = None,
    ):
        self.core = core
        if core is not None:
            message = f"core {core}: {message}"
        super().__init__(message, stage=stage)


class IngestError(SpikeFlowError):
    """Input event outside the sensor geometry or simulated tick range."""

    pass


class RelayCapacityError(SpikeFlowError):
    """Sensor geometry exceeds the relay layer's addressable core area."""

    pass


class CodecError(SpikeFlowError):
    """AER word cannot be encoded or decoded."""

    pass


class ConfigError(SpikeFlowError):
    """Invalid pipeline configuration."""

    pass


class StageError(SpikeFlowError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}", stage=stage)


class PlacementError(SpikeFlowError):
    """Placement file cannot be parsed into a network."""

    pass
