"""Gaussian splatting rasterizer"""

from .rasterizer import Splat2D, color_backward, project, render, render_reference

__all__ = ["Splat2D", "color_backward", "project", "render", "render_reference"]
