"""Figure rendering for pgdpo run and evaluation CSVs."""

from .readers import SchemaError
from .render import FigureSpec, render, render_all

__all__ = ["FigureSpec", "SchemaError", "render", "render_all"]
