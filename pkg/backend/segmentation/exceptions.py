from sentinel.exceptions import ValidationFailure


class InvalidProfile(ValidationFailure):
    """Profile index refers outside the profile, or the profile is too short to segment."""


class InvalidParameter(ValidationFailure):
    """Threshold or exclusion outside its documented range."""
