"""Exception types shared across the package."""
from __future__ import annotations


class ResourceLimitError(RuntimeError):
    """A requested build exceeds the configured size budget."""


class ParseError(ValueError):
    """An instance, tensor, or report file is malformed."""
