from sentinel.exceptions import ValidationFailure


class DanglingPayload(ValidationFailure):
    """Payload reference does not resolve to stored subsymbolic data."""


class UnknownNode(ValidationFailure):
    """Node id not present in the graph."""


class AntiSymmetryViolation(ValidationFailure):
    """Reverse of an anti-symmetric relation is already present."""


class RelationKindConflict(ValidationFailure):
    """A relation label was used with both symmetric and anti-symmetric kinds."""


class LevelViolation(ValidationFailure):
    """Abstraction not strictly level-increasing, or a node placed at a level it may not occupy."""


class UnregisteredEvidence(ValidationFailure):
    """Evidence names a series or node that has no registered region."""


class GoalTooLow(ValidationFailure):
    """Focus-of-attention goals must sit at L2 or above."""


class OutOfScopeNeed(ValidationFailure):
    """A sub-focus request names nodes outside its focus of attention."""


class InvalidGraphRecord(ValidationFailure):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")
