"""Linear calibration model: counts to population difference and atom number."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, NonFiniteError, ShapeError
from .grid import SuperpixelGrid

FREQ_FACTOR_WARN = 1e-2


@dataclass
class BetaMap:
    """Bias (atoms) plus one weight per superpixel (atoms per count)."""

    bias: float
    values: np.ndarray
    grid: SuperpixelGrid
    counts_scale: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.bias = float(self.bias)
        if self.values.shape != (self.grid.n,):
            raise ShapeError(f"beta has shape {self.values.shape}, grid needs ({self.grid.n},)")
        if not (np.isfinite(self.values).all() and np.isfinite(self.bias)):
            raise NonFiniteError("beta map contains non-finite entries")

    @classmethod
    def uniform(cls, grid: SuperpixelGrid, weight: float = 1.0, bias: float = 0.0) -> "BetaMap":
        return cls(bias=bias, values=np.full(grid.n, float(weight)), grid=grid)

    @property
    def parameters(self) -> np.ndarray:
        """``[bias, beta_1, ..., beta_n]``."""
        return np.concatenate([[self.bias], self.values])

    def all_positive(self) -> bool:
        return bool((self.values > 0).all())


@dataclass
class ShotRecord:
    shot_id: int
    cavity_jz: float
    freq_factor: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.ndim != 1:
            raise ShapeError("shot counts must be a vector")
        if not np.isfinite(self.counts).all() or (self.counts < 0).any():
            raise CalibrationError(f"shot {self.shot_id}: counts must be finite and nonnegative")
        if abs(self.freq_factor) > FREQ_FACTOR_WARN:
            warnings.warn(
                f"shot {self.shot_id}: |freq_factor| = {abs(self.freq_factor):.3g} is not small",
                stacklevel=2,
            )


def _check_counts(beta: BetaMap, counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.shape[-1:] != (beta.grid.n,):
        raise ShapeError(f"counts have trailing length {counts.shape[-1:]}, expected {beta.grid.n}")
    return counts


def estimate_jz(beta: BetaMap, counts) -> np.ndarray | float:
    """Half the weighted right-minus-left count difference, plus the bias.

    ``counts`` may be a single superpixel vector or a ``(shots, n)`` stack.
    """
    counts = _check_counts(beta, counts)
    return beta.bias + 0.5 * counts @ (beta.grid.signs * beta.values)


def estimate_n(beta: BetaMap, counts) -> np.ndarray | float:
    counts = _check_counts(beta, counts)
    return counts @ beta.values


def corrected_cavity_jz(cavity_jz, freq_factor, n_estimate):
    """Cavity reading corrected for probe detuning drift: ``Jz + f * N``."""
    n_estimate = np.asarray(n_estimate, dtype=float)
    if not np.isfinite(n_estimate).all():
        raise NonFiniteError("atom-number estimate is not finite")
    return np.asarray(cavity_jz, dtype=float) + np.asarray(freq_factor, dtype=float) * n_estimate


def corrected_shot_jz(shot: ShotRecord, n_estimate: float) -> float:
    return float(corrected_cavity_jz(shot.cavity_jz, shot.freq_factor, n_estimate))


def theta(jz_diff, n, contrast: float):
    """Angle on the Bloch sphere, ``jz_diff / (C * N / 2)``."""
    n = np.asarray(n, dtype=float)
    if contrast <= 0 or (n <= 0).any():
        raise CalibrationError("theta needs positive atom number and contrast")
    return np.asarray(jz_diff, dtype=float) / (contrast * n / 2.0)
