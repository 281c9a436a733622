from sentinel.exceptions import ValidationFailure


class InvalidSeries(ValidationFailure):
    """Series values are not a finite 1-D sequence or the interval is not positive."""


class SeriesTooShort(ValidationFailure):
    def __init__(self, length, required, series_id=None):
        self.length = length
        self.required = required
        self.series_id = series_id
        where = f" (series {series_id})" if series_id is not None else ""
        super().__init__(f"series has {length} samples{where}, at least {required} required")


class InvalidWindow(ValidationFailure):
    """Subsequence length, exclusion radius or horizon outside its valid range."""


class IndexOutOfRange(ValidationFailure):
    """Query position does not start a complete subsequence."""
