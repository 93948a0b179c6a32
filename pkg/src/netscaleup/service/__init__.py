"""FastAPI service wrapping the estimation core."""

from . import models, ops
from .app import app, create_app

__all__ = ["app", "create_app", "models", "ops"]
