from .render import FigureError, FigureSpec, RenderReport, render

__all__ = ["FigureError", "FigureSpec", "RenderReport", "render"]
