"""
Project-wide error roots.

Every named error raised by the apps derives from ``ValidationFailure``
(a caller or input mistake, exit code 1 on the command line).  Anything
else escaping the pipeline is treated as an internal failure (exit 2).
"""


class SentinelError(Exception):
    """Base class for all errors raised deliberately by Regime Sentinel."""


class ValidationFailure(SentinelError):
    """Input, configuration or request rejected by a documented rule."""
