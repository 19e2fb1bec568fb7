"""Exception types shared across the package."""


class EndtreeError(Exception):
    pass


class ParseError(EndtreeError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}{f', col {column}' if column is not None else ''})" if line else ""
        super().__init__(message + where)


class InvariantError(EndtreeError):
    pass


class ResourceCapError(EndtreeError):
    pass


class UnsupportedError(EndtreeError):
    """Raised when an operation does not support a descriptor or
    presentation class; callers may fall back to sampled checks."""


class UndeterminedError(EndtreeError):
    """Raised when a depth-bounded computation did not stabilize; the
    bound reached is reported, never silently swallowed."""

    def __init__(self, message, depth):
        self.depth = depth
        super().__init__(f"{message} (depth bound {depth})")
