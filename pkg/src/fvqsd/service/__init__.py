"""HTTP service wrapping the runner layer."""

from .app import app

__all__ = ["app"]
