"""Base exception for the orion package.

Module-specific errors subclass this in the module that raises them, so
callers can catch narrowly (e.g. ``store.NotFound``) or broadly (``OrionError``).
"""


class OrionError(Exception):
    pass
