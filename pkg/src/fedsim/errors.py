"""Exception types raised across the simulator."""


class FedsimError(Exception):
    """Base class for all simulator errors."""


class ShapeError(FedsimError, ValueError):
    pass


class ArchitectureError(FedsimError, ValueError):
    """Invalid layer sizes, or models whose architectures do not match."""


class InvalidLabelError(FedsimError, ValueError):
    pass


class NumericalError(FedsimError, ArithmeticError):
    pass


class EmptyClientError(FedsimError, ValueError):
    pass


class ClientError(FedsimError):
    """Wraps a failure raised while a specific client was training."""

    def __init__(self, client_id: int, cause: Exception):
        super().__init__(f"client {client_id}: {cause}")
        self.client_id = client_id
        self.cause = cause


class ParseError(FedsimError, ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class FormatError(FedsimError, ValueError):
    pass


class EmptyDatasetError(FedsimError, ValueError):
    pass


class StratificationError(FedsimError, ValueError):
    pass


class TooManyClientsError(FedsimError, ValueError):
    pass


class EncodingRangeError(FedsimError, OverflowError):
    def __init__(self, index: int, value: float, limit: float):
        super().__init__(
            f"parameter {index} = {value!r} outside fixed-point range (|w| < {limit!r})"
        )
        self.index = index


class ProtocolError(FedsimError):
    """Secure-aggregation protocol violation (missing peer, duplicate client, ...)."""
