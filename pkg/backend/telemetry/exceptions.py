from sentinel.exceptions import SentinelError, ValidationFailure


class MalformedRow(ValidationFailure):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NonUniformSampling(ValidationFailure):
    """Sample spacing of a series deviates from the sampling interval by more than 1%."""


class EmptyInput(ValidationFailure):
    """Input file holds no samples."""


class UnreadableInput(ValidationFailure):
    """Input file is missing, unreadable or not UTF-8 text."""


class InvalidConfig(ValidationFailure):
    """A pipeline setting lies outside its valid range."""


class PipelineStageError(SentinelError):
    """An unexpected failure inside one pipeline stage; the original error is the ``__cause__``."""

    def __init__(self, stage, series_id=None):
        self.stage = stage
        self.series_id = series_id
        where = f" on series {series_id}" if series_id is not None else ""
        super().__init__(f"pipeline stage {stage!r} failed{where}")
