"""Exception types shared across the simulator, parsers, and evaluator."""


class CollabSimError(Exception):
    """Base class for all library errors."""


class UnknownEntityError(CollabSimError):
    pass


class RelationNotAffordedError(CollabSimError):
    pass


class PositionOutOfBoundsError(CollabSimError):
    pass


class InconsistentUpdateError(CollabSimError):
    """An action update referenced an entity the observed view cannot resolve."""


class TypeMismatchError(CollabSimError):
    """A room was passed where furniture was expected, or vice versa."""


class DslSyntaxError(CollabSimError):
    """Parse failure with a 1-based source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DanglingReferenceError(CollabSimError):
    pass


class UnknownPredicateError(CollabSimError):
    pass


class ArityError(CollabSimError):
    pass


class IndexOutOfRangeError(CollabSimError):
    pass


class OutOfOrderStateError(CollabSimError):
    pass


class InstanceTooLargeError(CollabSimError):
    pass


class AgentBusyError(CollabSimError):
    pass


class CapabilityViolationError(CollabSimError):
    pass


class GrammarRejectionError(CollabSimError):
    """A tool-call string was rejected by the dynamic grammar."""

    def __init__(self, message: str, position: int = 0, expected: str = ""):
        super().__init__(message)
        self.position = position
        self.expected = expected


class EpisodeTerminatedError(CollabSimError):
    pass


class UnplannableError(CollabSimError):
    pass


class SceneTooSmallError(CollabSimError):
    pass


class EmptyInputError(CollabSimError):
    pass


class ProtocolError(CollabSimError):
    pass
