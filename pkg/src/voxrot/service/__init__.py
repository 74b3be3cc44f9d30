"""HTTP service exposing the operations layer."""

from .app import create_app

__all__ = ["create_app"]
