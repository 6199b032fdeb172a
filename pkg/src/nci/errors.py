"""Exception types shared across the toolkit."""


class NCIError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(NCIError, ValueError):
    """Parameters are individually valid but cannot work together."""


class DegenerateCodeError(NCIError, ValueError):
    """The analysis code has (near) zero energy over the window."""


class ParseError(NCIError, ValueError):
    """Malformed input file. Carries a line number or byte offset when known."""

    def __init__(self, message, *, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
