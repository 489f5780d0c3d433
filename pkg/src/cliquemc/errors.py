"""Exception hierarchy.

The CLI maps ``InvalidParameterError``/``InvalidStateError`` to exit code 1 and
``BudgetExceededError``/``UnreachableError`` to exit code 2.
"""


class CliqueMCError(Exception):
    pass


class InvalidParameterError(CliqueMCError, ValueError):
    pass


class InvalidStateError(CliqueMCError):
    pass


class BudgetExceededError(CliqueMCError):
    pass


class UnreachableError(CliqueMCError):
    pass
