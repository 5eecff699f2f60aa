"""Exception hierarchy shared by every mmln module."""


class MMLNError(Exception):
    """Base class for all errors raised by mmln."""


class ModelError(MMLNError):
    """A rule file or Model object is invalid."""


class ParseError(ModelError):
    """Syntax or validation error located in a source text.

    ``line`` and ``column`` are 1-based.
    """

    def __init__(self, message, line=1, column=1, code="SyntaxError"):
        self.message = message
        self.line = line
        self.column = column
        self.code = code
        super().__init__(f"{line}:{column}: {message}")


class EvidenceError(MMLNError):
    """Evidence database, label file or case reference is invalid."""


class ExtractionError(MMLNError):
    pass


class ConfigError(MMLNError):
    pass


class NumericalError(MMLNError):
    """An objective or probability became non-finite."""


class MetricsError(MMLNError):
    """Metric undefined for the given scores (e.g. AUC with a single class)."""
