# src/gs_compositor/__version__.py
__version__ = "0.1.0"
