"""Hilbert-curve serialization of Gaussians and the grid/provenance mappings"""

from .hilbert import (
    h2_coord_to_index, h2_index_to_coord, h3_coord_to_index, h3_index_to_coord, order_points,
)
from .mapping import GridMapping, build_grid_mapping, mapping_for_centers, phi, psi, psi_inverse

__all__ = [
    "GridMapping", "build_grid_mapping", "h2_coord_to_index", "h2_index_to_coord",
    "h3_coord_to_index", "h3_index_to_coord", "mapping_for_centers", "order_points",
    "phi", "psi", "psi_inverse",
]
