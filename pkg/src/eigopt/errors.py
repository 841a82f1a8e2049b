"""Exception types shared across the package."""


class EigoptError(Exception):
    pass


class DomainError(EigoptError, ArithmeticError):
    """An operation was evaluated outside its mathematical domain."""


class ShapeError(EigoptError, ValueError):
    pass


class ContractError(EigoptError, ValueError):
    """A documented precondition was violated by the caller."""


class CapabilityError(EigoptError, NotImplementedError):
    """The requested operation is not supported by this model or family."""


class ParameterError(EigoptError, ValueError):
    """Distribution parameters outside their valid domain."""


class ConfigError(EigoptError, ValueError):
    pass


class NumericalAbort(EigoptError, RuntimeError):
    """Optimisation stopped after repeated non-finite values."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
