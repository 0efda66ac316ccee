"""Figure rendering for grad-phi experiment CSV outputs."""

from .render import FigureSpec, render

__all__ = ["FigureSpec", "render"]

__version__ = "0.1.0"
