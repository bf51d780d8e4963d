"""Exception hierarchy. Each class maps to one CLI exit code."""

from __future__ import annotations


class HetrecError(Exception):
    exit_code = 3


class ConfigError(HetrecError, ValueError):
    """Invalid schema, configuration, flag combination or weight file."""

    exit_code = 1


class DataError(HetrecError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class UnknownUserError(HetrecError, KeyError):
    exit_code = 2

    def __init__(self, user_id: str):
        super().__init__(user_id)
        self.user_id = user_id

    def __str__(self) -> str:
        return f"user {self.user_id!r} is not a vertex of the graph"


class ConvergenceError(HetrecError, RuntimeError):
    """Power iteration hit its iteration cap before reaching the tolerance.

    The partially converged score vector is attached so the caller can
    decide whether to use it anyway.
    """

    exit_code = 3

    def __init__(self, source: int, iterations: int, residual: float, scores=None):
        super().__init__(
            f"PPR from vertex {source} did not converge after {iterations} "
            f"iterations (L1 residual {residual:.3e})"
        )
        self.source = source
        self.iterations = iterations
        self.residual = residual
        self.scores = scores
