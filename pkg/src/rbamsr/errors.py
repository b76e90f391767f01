"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand extents are incompatible with an operation."""


class ContractError(ValueError):
    """A documented precondition of a call was violated."""


class ConfigError(ValueError):
    """An invalid model, training or run configuration."""


class GraphStateError(RuntimeError):
    """The autodiff graph is in a state that forbids the request."""


class OptimizerStateError(RuntimeError):
    """Optimizer invoked without the gradients it needs."""


class FormatError(ValueError):
    """Malformed file contents.

    ``offset`` is the byte position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
