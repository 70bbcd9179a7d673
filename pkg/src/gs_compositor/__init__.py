# src/gs_compositor/__init__.py
"""gs-compositor - multi-view object compositing with 3D Gaussian scenes"""

from .__version__ import __version__
from .core.logging import setup_logging

# Initialize logging on import; the CLI reconfigures from the pipeline config
setup_logging()
