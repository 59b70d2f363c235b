"""Exception hierarchy for covlab.

Two failure categories matter to callers: misuse (bad arguments, malformed
config, violated preconditions) and numeric breakdown (factorization,
convergence, integration).  The CLI maps them to exit codes 2 and 1.
"""


class CovlabError(Exception):
    """Base class for all covlab errors."""


class UsageError(CovlabError):
    """Invalid arguments, malformed config, or violated API preconditions."""


class NumericError(CovlabError):
    """A numeric routine failed: factorization, convergence, or quadrature."""
