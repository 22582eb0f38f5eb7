"""Exception types shared across the package."""

from __future__ import annotations


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class FormatError(ValueError):
    """Malformed model or dataset file.

    ``offset`` is a byte offset for binary formats and a 1-based row number
    for CSV; ``column`` is set for CSV cell errors.
    """

    def __init__(self, message: str, offset: int | None = None, column: int | None = None):
        self.offset = offset
        self.column = column
        where = ""
        if offset is not None:
            where = f" (at offset {offset})" if column is None else f" (row {offset}, column {column})"
        super().__init__(message + where)


class DivergedError(RuntimeError):
    """Training loss became NaN or infinite."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
