"""Exception hierarchy shared by every stage of the pipeline."""


class QBindError(Exception):
    """Base class for all package errors."""


class InputError(QBindError, ValueError):
    """Invalid argument value (non-finite angle, wrong length, bad range)."""


class StructuralError(QBindError, IndexError):
    """A gate or circuit does not fit the state it is applied to."""


class CapacityError(QBindError, MemoryError):
    """Requested simulation exceeds the configured memory guardrail."""


class EncodingError(QBindError, ValueError):
    """A complex cannot be turned into a valid occupancy vector."""


class ParseError(QBindError, ValueError):
    """Malformed structure, dataset, cache or checkpoint content."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class IncompatibilityError(QBindError):
    """Checkpoint was written with an unsupported topology or gate convention."""


class ProtocolError(QBindError):
    """The training protocol could not select a model."""
