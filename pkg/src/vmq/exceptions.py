"""Exception hierarchy for vmq."""


class VmqError(Exception):
    """Base class for all errors raised by vmq."""


class ParameterError(VmqError, ValueError):
    """A parameter is outside its allowed domain."""


class ClassTableError(VmqError, ValueError):
    """A class id or label does not resolve against the class table in force."""


class GeometryError(VmqError, ValueError):
    """A box or region violates its coordinate invariants."""


class GridMismatchError(VmqError, ValueError):
    """Two occupancy grids with different side lengths were combined."""


class QueryError(VmqError):
    """Base class for query-language errors. Carries a 1-based position."""

    kind = "query"

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class QueryLexicalError(QueryError):
    kind = "lexical"


class QuerySyntaxError(QueryError):
    kind = "syntax"


class UnknownNameError(QueryError):
    """Unknown class or region name."""

    kind = "unknown-name"


class UndeclaredVariableError(QueryError):
    kind = "undeclared-variable"


class QueryShapeError(QueryError):
    """Query is well-formed but has the wrong shape for the requested operation."""

    kind = "shape"


class EstimationError(VmqError, ValueError):
    """Base class for estimator failures."""


class InsufficientSampleError(EstimationError):
    pass


class DegenerateControlError(EstimationError):
    """The control variate has zero sample variance."""


class IllConditionedControlsError(EstimationError):
    pass


class SamplingError(VmqError, ValueError):
    pass


class ConfigurationError(VmqError, ValueError):
    pass


class AnnotationFormatError(VmqError, ValueError):
    """Malformed or out-of-order annotation record."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
