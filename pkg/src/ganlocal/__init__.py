"""Semantic part discovery and spatially-localized style edits for a
style-based image generator, with locality and distribution metrics."""

from . import editor, metrics, minigen, ndio, semantics
from .errors import GanLocalError

__all__ = ["editor", "metrics", "minigen", "ndio", "semantics", "GanLocalError"]

__version__ = "0.1.0"
