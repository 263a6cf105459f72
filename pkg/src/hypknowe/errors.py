"""Exception hierarchy shared across the package."""


class HypKnoweError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(HypKnoweError, ValueError):
    pass


class InvalidConfigError(HypKnoweError, ValueError):
    pass


class ConfigMismatchError(HypKnoweError, ValueError):
    """Two ball points (or a point and a set) live in different balls."""


class ShapeError(HypKnoweError, ValueError):
    pass


class NonFiniteError(HypKnoweError, FloatingPointError):
    pass


class DegenerateDistributionError(HypKnoweError, ValueError):
    pass


class ZeroColumnError(HypKnoweError, ValueError):
    def __init__(self, column: int):
        super().__init__(f"classifier column {column} is zero and cannot be normalized")
        self.column = column


class ProtocolError(HypKnoweError, ValueError):
    pass


class InsufficientClassesError(ProtocolError):
    pass


class InsufficientSamplesError(ProtocolError):
    pass


class FrozenColumnError(HypKnoweError, RuntimeError):
    """A training step tried to modify a frozen classifier column."""


class UndefinedRateError(HypKnoweError, ZeroDivisionError):
    def __init__(self, kind: str, session: int):
        super().__init__(f"{kind} forgetting rate at session {session} divides by a zero accuracy")
        self.kind = kind
        self.session = session
