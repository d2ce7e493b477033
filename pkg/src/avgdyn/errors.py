from __future__ import annotations

from .graph import GraphError


class DisconnectedGraphError(GraphError):
    pass


class EmptyWindowError(ValueError):
    """No integer round lies in the labeling window (T1, T2]."""


class InvariantViolation(AssertionError):
    """A checked mathematical invariant failed on concrete numbers."""
