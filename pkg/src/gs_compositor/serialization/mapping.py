"""Grid mappings between per-Gaussian attributes and 2D images.

``psi`` writes per-Gaussian vectors into an S x S grid following a 2D
Hilbert fold of the Hilbert-ordered sequence; ``psi_inverse`` reads them
back. ``phi`` lifts per-pixel feature maps onto Gaussians through their
pixel provenance.
"""

from dataclasses import dataclass
from typing import Any, Dict, Literal, Optional

import numpy as np

from ..config.constants import DEFAULT_HILBERT_ORDER
from ..config.validators import log2_exact, smallest_power_of_two_side
from ..core.errors import DomainError
from .hilbert import hilbert_decode, order_points

Fold = Literal["hilbert", "raster"]


@dataclass(frozen=True)
class GridMapping:
    """
    Placement of M Gaussians on an S x S grid

    ``perm[k]`` is the Gaussian at sequence position k and ``cells[k]`` the
    (row, col) that position occupies. Cells k >= M of the grid are padding.
    """
    perm: np.ndarray
    cells: np.ndarray
    side: int
    m_count: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "side": int(self.side),
            "m_count": int(self.m_count),
            "perm": [int(i) for i in self.perm],
            "cells": [[int(r), int(c)] for r, c in self.cells],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridMapping":
        try:
            mapping = cls(
                perm=np.asarray(data["perm"], dtype=np.int64),
                cells=np.asarray(data["cells"], dtype=np.int64).reshape(-1, 2),
                side=int(data["side"]),
                m_count=int(data["m_count"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"malformed grid mapping document: {e}") from e
        mapping.validate()
        return mapping

    def validate(self) -> None:
        m = self.m_count
        if m < 1 or self.perm.shape != (m,) or self.cells.shape != (m, 2):
            raise DomainError("grid mapping arrays do not match m_count")
        if self.side < 1 or self.side * self.side < m:
            raise DomainError(f"grid side {self.side} too small for {m} Gaussians")
        if not np.array_equal(np.sort(self.perm), np.arange(m)):
            raise DomainError("perm is not a permutation of 0..M-1")
        if self.cells.min() < 0 or self.cells.max() >= self.side:
            raise DomainError("grid cell out of range")
        flat = self.cells[:, 0] * self.side + self.cells[:, 1]
        if np.unique(flat).size != m:
            raise DomainError("grid cells are not distinct")


def build_grid_mapping(
        m_count: int,
        perm: Optional[np.ndarray] = None,
        fold: Fold = "hilbert",
) -> GridMapping:
    """
    Fold a sequence of ``m_count`` Gaussians into the smallest power-of-two grid

    Args:
        m_count: number of Gaussians M
        perm: sequence order (defaults to identity)
        fold: ``hilbert`` places position k at the k-th cell of the 2D
            Hilbert traversal; ``raster`` uses row-major order
    """
    if m_count < 1:
        raise DomainError(f"cannot build a grid for {m_count} Gaussians")
    side = smallest_power_of_two_side(m_count)
    positions = np.arange(m_count, dtype=np.int64)
    if fold == "hilbert":
        if side == 1:
            cells = np.zeros((1, 2), dtype=np.int64)
        else:
            xy = hilbert_decode(positions, log2_exact(side), 2)
            # x runs along columns, y along rows
            cells = np.stack([xy[:, 1], xy[:, 0]], axis=1)
    elif fold == "raster":
        cells = np.stack([positions // side, positions % side], axis=1)
    else:
        raise DomainError(f"unknown fold {fold!r}")
    perm = positions if perm is None else np.asarray(perm, dtype=np.int64)
    mapping = GridMapping(perm=perm, cells=cells, side=side, m_count=m_count)
    mapping.validate()
    return mapping


def mapping_for_centers(
        centers: np.ndarray,
        p: int = DEFAULT_HILBERT_ORDER,
        serialization: Fold = "hilbert",
) -> GridMapping:
    """Hilbert-order the centers and fold them; ``raster`` keeps input order"""
    centers = np.asarray(centers, dtype=np.float64)
    if serialization == "raster":
        return build_grid_mapping(centers.shape[0], fold="raster")
    return build_grid_mapping(centers.shape[0], perm=order_points(centers, p), fold="hilbert")


def psi(values: np.ndarray, mapping: GridMapping) -> np.ndarray:
    """(M, C) per-Gaussian values -> (C, S, S) grid; padding cells are zero"""
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] != mapping.m_count:
        raise DomainError(
            f"psi expects ({mapping.m_count}, C) values, got {tuple(values.shape)}"
        )
    grid = np.zeros((values.shape[1], mapping.side, mapping.side), dtype=values.dtype)
    grid[:, mapping.cells[:, 0], mapping.cells[:, 1]] = values[mapping.perm].T
    return grid


def psi_inverse(grid: np.ndarray, mapping: GridMapping) -> np.ndarray:
    """(C, S, S) grid -> (M, C) per-Gaussian values; padding is ignored"""
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.shape[1:] != (mapping.side, mapping.side):
        raise DomainError(
            f"psi_inverse expects (C, {mapping.side}, {mapping.side}), got {tuple(grid.shape)}"
        )
    values = np.empty((mapping.m_count, grid.shape[0]), dtype=grid.dtype)
    values[mapping.perm] = grid[:, mapping.cells[:, 0], mapping.cells[:, 1]].T
    return values


def phi(feature_maps: np.ndarray, provenance: np.ndarray) -> np.ndarray:
    """
    Gather per-Gaussian feature vectors from per-view feature maps

    Args:
        feature_maps: (m, n, H, W) features, one map per view
        provenance: (M, 3) integer (view, row, col) of each Gaussian

    Returns:
        (M, n) features; Gaussian g gets feature_maps[view_g, :, row_g, col_g]
    """
    feature_maps = np.asarray(feature_maps)
    provenance = np.asarray(provenance, dtype=np.int64).reshape(-1, 3)
    if feature_maps.ndim != 4:
        raise DomainError(f"feature maps must be (m, n, H, W), got {feature_maps.shape}")
    m, _, h, w = feature_maps.shape
    view, row, col = provenance[:, 0], provenance[:, 1], provenance[:, 2]
    if provenance.size and (
            view.min() < 0 or view.max() >= m
            or row.min() < 0 or row.max() >= h
            or col.min() < 0 or col.max() >= w
    ):
        raise DomainError("provenance outside the feature maps")
    return feature_maps[view, :, row, col]
