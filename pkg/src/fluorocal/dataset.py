"""Column-oriented container for a sequence of shots on one grid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, ShapeError
from .grid import SuperpixelGrid
from .model import ShotRecord


@dataclass
class Dataset:
    """Shots stored as arrays; ``counts`` has shape ``(shots, n)``.

    ``counts_scale`` is the counts-per-atom estimate used to pre-scale
    counts before training (1 when none is known).
    """

    grid: SuperpixelGrid
    shot_ids: np.ndarray
    cavity_jz: np.ndarray
    freq_factor: np.ndarray
    counts: np.ndarray
    contrast: float = 0.92
    counts_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shot_ids = np.asarray(self.shot_ids, dtype=np.int64).reshape(-1)
        self.cavity_jz = np.asarray(self.cavity_jz, dtype=float).reshape(-1)
        self.freq_factor = np.asarray(self.freq_factor, dtype=float).reshape(-1)
        self.counts = np.asarray(self.counts, dtype=float).reshape(-1, self.grid.n)
        m = len(self.shot_ids)
        if not (len(self.cavity_jz) == len(self.freq_factor) == len(self.counts) == m):
            raise ShapeError("shot_ids, cavity_jz, freq_factor and counts disagree on shot count")
        if not 0 < self.contrast <= 1:
            raise CalibrationError(f"contrast must lie in (0, 1], got {self.contrast}")
        if not self.counts_scale > 0:
            raise CalibrationError(f"counts_scale must be positive, got {self.counts_scale}")

    def __len__(self) -> int:
        return len(self.shot_ids)

    def __iter__(self):
        for i in range(len(self)):
            yield self.shot(i)

    def shot(self, i: int) -> ShotRecord:
        return ShotRecord(
            shot_id=int(self.shot_ids[i]),
            cavity_jz=float(self.cavity_jz[i]),
            freq_factor=float(self.freq_factor[i]),
            counts=self.counts[i],
        )

    @property
    def shots(self) -> list[ShotRecord]:
        return list(self)

    def subset(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        return replace(
            self,
            shot_ids=self.shot_ids[index],
            cavity_jz=self.cavity_jz[index],
            freq_factor=self.freq_factor[index],
            counts=self.counts[index],
            meta=dict(self.meta),
        )

    def scaled(self) -> "Dataset":
        """Copy with counts divided by ``counts_scale`` (and scale reset to 1)."""
        return replace(self, counts=self.counts / self.counts_scale, counts_scale=1.0, meta=dict(self.meta))

    @classmethod
    def from_shots(
        cls,
        shots: Iterable[ShotRecord],
        grid: SuperpixelGrid,
        contrast: float = 0.92,
        counts_scale: float = 1.0,
    ) -> "Dataset":
        shots = list(shots)
        return cls(
            grid=grid,
            shot_ids=[s.shot_id for s in shots],
            cavity_jz=[s.cavity_jz for s in shots],
            freq_factor=[s.freq_factor for s in shots],
            counts=np.array([s.counts for s in shots]).reshape(len(shots), grid.n),
            contrast=contrast,
            counts_scale=counts_scale,
        )
