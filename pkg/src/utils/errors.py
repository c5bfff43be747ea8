class ConfigurationError(ValueError):
    """Invalid configuration, shape mismatch or unknown key"""


class ContractViolation(RuntimeError):
    """A call broke a forward/backward or range contract"""


class NonFiniteLossError(FloatingPointError):
    """A loss component came out NaN or infinite"""

    def __init__(self, message: str, components: dict = None):
        super().__init__(message)
        self.components = components or {}


class TrainingDivergence(RuntimeError):
    """Too many consecutive skipped steps"""
