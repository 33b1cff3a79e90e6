"""Plotting companion for the mpcmci experiment artifacts."""

from .render import FigureSpec, main, render

__all__ = ["FigureSpec", "render", "main"]
__version__ = "0.1.0"
