from sentinel.exceptions import ValidationFailure


class InvalidSpec(ValidationFailure):
    """Fleet specification outside its valid range."""


class ScenarioOutOfRange(ValidationFailure):
    """Scenario window or affected series do not fit the fleet."""


class InvalidCatalog(ValidationFailure):
    """Scenario catalog file does not follow the catalog schema."""
