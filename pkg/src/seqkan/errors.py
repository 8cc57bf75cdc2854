"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SeqKanError(Exception):
    exit_code = 1


class ConfigError(SeqKanError):
    exit_code = 2


class UsageError(SeqKanError, ValueError):
    exit_code = 2


class DataError(SeqKanError):
    exit_code = 3


class DegenerateStepError(DataError):
    """Raised when a velocity difference is too small to divide by."""


class UndefinedMetricError(DataError):
    """A ranking metric was requested for labels that lack a required class."""


class NumericAbort(SeqKanError):
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GradArithmeticError(SeqKanError, ArithmeticError):
    """Domain violation inside the differentiation engine."""

    exit_code = 4

    def __init__(self, message, node_ids=()):
        super().__init__(f"{message} (nodes {list(node_ids)})")
        self.node_ids = tuple(node_ids)
