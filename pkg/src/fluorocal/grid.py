"""Superpixel partition of the camera sensor.

Superpixels are indexed row-major: ``j = row * cols + col``.  Columns
``[0, left_cols)`` image the lower state and carry sign -1; the remaining
columns image the upper state and carry sign +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, FormatError, IndexRangeError, ShapeError

ORDERING = "row-major"


@dataclass(frozen=True)
class SuperpixelGrid:
    rows: int = 12
    cols: int = 16
    block_size: int = 128
    left_cols: int | None = None

    def __post_init__(self):
        for name in ("rows", "cols", "block_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.left_cols is None:
            object.__setattr__(self, "left_cols", self.cols // 2)
        if not 0 < self.left_cols < self.cols:
            raise ConfigError(
                f"left_cols must satisfy 0 < left_cols < cols={self.cols}, got {self.left_cols}"
            )

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def pixel_shape(self) -> tuple[int, int]:
        return (self.rows * self.block_size, self.cols * self.block_size)

    @cached_property
    def signs(self) -> np.ndarray:
        """Per-superpixel sign, -1 on the left (lower state), +1 on the right."""
        col = np.arange(self.n) % self.cols
        return np.where(col < self.left_cols, -1.0, 1.0)

    def row_col(self, j: int) -> tuple[int, int]:
        if not 0 <= j < self.n:
            raise IndexRangeError(f"superpixel index {j} outside [0, {self.n})")
        return divmod(int(j), self.cols)

    def to_manifest(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "block_size": self.block_size,
            "left_cols": self.left_cols,
            "ordering": ORDERING,
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "SuperpixelGrid":
        ordering = manifest.get("ordering", ORDERING)
        if ordering != ORDERING:
            raise FormatError(f"unsupported superpixel ordering {ordering!r}")
        try:
            return cls(
                rows=int(manifest["rows"]),
                cols=int(manifest["cols"]),
                block_size=int(manifest["block_size"]),
                left_cols=int(manifest["left_cols"]),
            )
        except KeyError as exc:
            raise FormatError(f"grid manifest missing field {exc.args[0]}") from None


@dataclass(frozen=True)
class EdgeSet:
    """Unique 4-connected neighbour pairs ``(a, b)`` with ``a < b``."""

    edges: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.edges)

    def laplacian(self) -> np.ndarray:
        """Dense graph Laplacian, so that ``b @ L @ b`` is the edge penalty."""
        lap = np.zeros((self.n, self.n))
        a, b = self.edges[:, 0], self.edges[:, 1]
        np.add.at(lap, (a, a), 1.0)
        np.add.at(lap, (b, b), 1.0)
        np.add.at(lap, (a, b), -1.0)
        np.add.at(lap, (b, a), -1.0)
        return lap

    def degree(self) -> np.ndarray:
        """Number of edges touching each superpixel."""
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(float)

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        diff = values[self.edges[:, 1]] - values[self.edges[:, 0]]
        out = np.zeros(self.n)
        np.add.at(out, self.edges[:, 1], diff)
        np.add.at(out, self.edges[:, 0], -diff)
        return out


def side_sign(j: int, grid: SuperpixelGrid) -> int:
    _, col = grid.row_col(j)
    return -1 if col < grid.left_cols else 1


def neighbor_edges(grid: SuperpixelGrid) -> EdgeSet:
    idx = np.arange(grid.n).reshape(grid.rows, grid.cols)
    horizontal = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vertical = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    edges = np.concatenate([horizontal, vertical]).astype(np.intp)
    return EdgeSet(edges=edges.reshape(-1, 2), n=grid.n)


def bin_image(pixels: np.ndarray, grid: SuperpixelGrid) -> np.ndarray:
    """Sum a full-resolution image into superpixel totals (row-major)."""
    pixels = np.asarray(pixels, dtype=float)
    if pixels.shape != grid.pixel_shape:
        raise ShapeError(
            f"image shape {pixels.shape} does not match grid {grid.rows}x{grid.cols} "
            f"blocks of {grid.block_size} px, expected {grid.pixel_shape}"
        )
    b = grid.block_size
    return pixels.reshape(grid.rows, b, grid.cols, b).sum(axis=(1, 3)).ravel()
