from sentinel.exceptions import ValidationFailure


class MixedTimelines(ValidationFailure):
    """Regime changes or partial histograms are not on one common fleet timeline."""


class InvalidFleetSize(ValidationFailure):
    def __init__(self, fleet_size):
        self.fleet_size = fleet_size
        super().__init__(f"fleet_size must be >= 1, got {fleet_size}")
