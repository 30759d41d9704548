"""Exception types shared across the package.

The CLI maps these onto exit codes: infeasible dataset -> 2, format/parse
problems -> 3.
"""


class ProbevalError(Exception):
    """Base class for all package errors."""


class ParseError(ProbevalError):
    """Malformed textual input (CoNLL-U, WikiAnn, vocabulary files)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ProbevalError):
    """Malformed binary input (embedding containers, checkpoints)."""


class InfeasibleSplitError(ProbevalError):
    """A requested dataset split cannot satisfy its constraints.

    ``constraint`` names the binding constraint so callers can report it.
    """

    def __init__(self, message: str, constraint: str):
        self.constraint = constraint
        super().__init__(f"{message} (binding constraint: {constraint})")
