"""Exception types shared across the package."""


class NeuralignError(Exception):
    """Base class for all package errors."""


class DimensionError(NeuralignError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(NeuralignError):
    """A caller violated an operation's contract (e.g. non-scalar backward root)."""


class ConfigurationError(NeuralignError):
    """Invalid configuration value, unknown key, or malformed run spec."""


class EmptyClassError(NeuralignError):
    """A class label has no samples where at least one is required."""

    def __init__(self, class_id: int, context: str = ""):
        self.class_id = class_id
        msg = f"class {class_id} has no samples"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class FormatError(NeuralignError):
    """On-disk artifact is malformed; the message names the offending field."""


class MissingComponentError(NeuralignError):
    """A model component required by the requested operation is absent."""


class DivergenceError(NeuralignError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)
