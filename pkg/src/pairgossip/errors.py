"""Exception hierarchy. The CLI maps these to exit codes."""


class PairGossipError(Exception):
    pass


class ParameterError(PairGossipError, ValueError):
    """Invalid argument or configuration value (CLI exit code 2)."""


class PreconditionError(ParameterError):
    """Input violates a theoretical precondition, e.g. a bipartite graph."""


class DataError(PairGossipError):
    """Unreadable or empty dataset (CLI exit code 3)."""


class NumericError(PairGossipError, ArithmeticError):
    pass
