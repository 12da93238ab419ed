"""Figure rendering for swinging-spring phase-averaging CSV outputs."""

__version__ = "0.1.0"

from .render import (
    EmptyInputError,
    FigureSpec,
    SchemaError,
    build_figure,
    load_error_map,
    load_trajectory,
    render,
)

__all__ = [
    "EmptyInputError",
    "FigureSpec",
    "SchemaError",
    "build_figure",
    "load_error_map",
    "load_trajectory",
    "render",
]
