"""Exception hierarchy shared by all saladbench modules."""


class SaladBenchError(Exception):
    """Base class for all saladbench errors."""


class ArgumentError(SaladBenchError):
    """A caller-supplied argument is out of range or inconsistent."""


class DegenerateInputError(SaladBenchError):
    """Input too small or empty for the requested operation."""


class UnsupportedTransformError(SaladBenchError):
    """Transformation not applicable to this task shape."""


class DataError(SaladBenchError):
    """Dataset file is malformed (duplicate id, unknown label, ...)."""


class ConfigError(SaladBenchError):
    """Run configuration is invalid."""


class InsufficientDataError(SaladBenchError):
    """Not enough examples to train the requested artifact."""


class TrainingError(SaladBenchError):
    """Training diverged or otherwise failed."""


class ProviderError(SaladBenchError):
    """Base class for prediction-provider failures."""


class MissingPredictionError(ProviderError):
    """A replay file lacks a prediction for a requested id."""


class TransportError(ProviderError):
    """HTTP provider failed at the transport level."""


class ContractError(ProviderError):
    """A provider response violates the prediction contract."""


class CapabilityError(ProviderError):
    """Provider cannot supply the requested capability (e.g. saliency)."""
