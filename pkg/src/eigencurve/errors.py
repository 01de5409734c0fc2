"""Shared error types."""

from __future__ import annotations


class NonFiniteLossError(RuntimeError):
    """A loss term became non-finite; carries the index of the offending point."""

    def __init__(self, message: str, point_index: int | None = None):
        super().__init__(message)
        self.point_index = point_index
