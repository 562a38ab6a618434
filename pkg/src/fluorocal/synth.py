"""Synthetic fluorescence/cavity datasets with a known collection-efficiency map.

Each shot draws a total atom number and a population difference, places the
two spin states as truncated, discretised 2-D Gaussians on their halves of
the sensor, converts atoms to counts through ``counts_per_atom`` times the
efficiency field, and adds photon shot noise (Gaussian, variance equal to
the mean) and per-superpixel read noise.  The cavity reading is the true
population difference minus the detuning term ``f * N`` plus readout noise,
so that the frequency-corrected target is unbiased.

Coordinates are in superpixel units: superpixel ``(r, c)`` spans
``[r, r + 1) x [c, c + 1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import erf

from .dataset import Dataset
from .errors import ConfigError
from .grid import SuperpixelGrid

# Read noise per superpixel giving a fluorescence-only floor close to
# 690 urad at the default atom number and collection rate.
DEFAULT_READ_NOISE = 3500.0


@dataclass
class EfficiencyField:
    """Relative collection efficiency per superpixel (mean 1)."""

    values: np.ndarray
    grid: SuperpixelGrid
    seed: int | None = None
    amplitude: float = 0.0
    correlation_length: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ConfigError(f"field has shape {self.values.shape}, grid needs ({self.grid.n},)")
        if not (self.values > 0).all():
            raise ConfigError("efficiency field must be strictly positive")

    @property
    def peak_to_peak(self) -> float:
        return float((self.values.max() - self.values.min()) / self.values.mean())

    @classmethod
    def uniform(cls, grid: SuperpixelGrid) -> "EfficiencyField":
        return cls(values=np.ones(grid.n), grid=grid)

    @classmethod
    def two_level(cls, grid: SuperpixelGrid, left: float, right: float) -> "EfficiencyField":
        values = np.where(grid.signs < 0, float(left), float(right))
        return cls(values=values, grid=grid, amplitude=abs(right - left) / values.mean())


def make_efficiency_field(
    grid: SuperpixelGrid,
    seed: int,
    amplitude: float = 0.10,
    correlation_length: float = 10.0,
) -> EfficiencyField:
    """Smooth random field built from low-order cosine harmonics.

    Mode ``(p, q)`` has wavenumber ``pi * (p / rows, q / cols)`` and random
    Gaussian amplitude damped by ``exp(-(k * correlation_length)^2 / 8)``;
    modes with ``k * correlation_length > 2 * pi`` are dropped.  The sum is
    rescaled to mean 1 and peak-to-peak exactly ``amplitude``.
    """
    if not 0 <= amplitude < 0.5:
        raise ConfigError(f"amplitude must lie in [0, 0.5), got {amplitude}")
    if correlation_length < 1:
        raise ConfigError(f"correlation_length must be >= 1, got {correlation_length}")
    if amplitude == 0:
        return EfficiencyField(np.ones(grid.n), grid, seed, 0.0, correlation_length)
    rng = np.random.default_rng(seed)
    r = np.arange(grid.rows) + 0.5
    c = np.arange(grid.cols) + 0.5
    surface = np.zeros((grid.rows, grid.cols))
    for p in range(grid.rows):
        for q in range(grid.cols):
            if p == 0 and q == 0:
                continue
            kr, kc = math.pi * p / grid.rows, math.pi * q / grid.cols
            k = math.hypot(kr, kc)
            if k * correlation_length > 2 * math.pi:
                continue
            weight = math.exp(-((k * correlation_length) ** 2) / 8.0)
            surface += weight * rng.standard_normal() * np.outer(np.cos(kr * r), np.cos(kc * c))
    spread = surface.max() - surface.min()
    if spread == 0:
        return EfficiencyField(np.ones(grid.n), grid, seed, 0.0, correlation_length)
    values = 1.0 + amplitude * (surface - surface.mean()) / spread
    return EfficiencyField(values.ravel(), grid, seed, amplitude, correlation_length)


@dataclass
class GenConfig:
    grid: SuperpixelGrid = field(default_factory=SuperpixelGrid)
    shots: int = 600
    mean_atoms: float = 390_000.0
    atom_number_jitter: float = 0.02
    mean_theta: float = 0.0
    cavity_noise_theta: float = 310e-6
    squeeze_spread_theta: float = 310e-6
    prep_fraction: float = 0.25
    prep_spread_theta: float = 10e-3
    counts_per_atom: float = 200.0
    cloud_sigma: float = 2.5
    cloud_center_jitter: float = 0.8
    cloud_relative_jitter: float = 0.6
    freq_factor_std: float = 1e-5
    contrast: float = 0.92
    read_noise_per_superpixel: float = DEFAULT_READ_NOISE
    shot_noise: bool = True
    leak_tolerance: float = 0.5
    seed: int = 0
    field_amplitude: float = 0.10
    field_correlation_length: float = 10.0
    field_seed: int | None = None  # None reuses ``seed``

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise ConfigError(f"shots must be a positive integer, got {self.shots!r}")
        if not self.mean_atoms > 0:
            raise ConfigError("mean_atoms must be positive")
        if not 0 < self.contrast <= 1:
            raise ConfigError("contrast must lie in (0, 1]")
        if not self.counts_per_atom > 0:
            raise ConfigError("counts_per_atom must be positive")
        if not self.cloud_sigma > 0:
            raise ConfigError("cloud_sigma must be positive")
        if not 0 <= self.prep_fraction <= 1:
            raise ConfigError("prep_fraction must lie in [0, 1]")
        for name in (
            "atom_number_jitter",
            "cavity_noise_theta",
            "squeeze_spread_theta",
            "prep_spread_theta",
            "cloud_center_jitter",
            "cloud_relative_jitter",
            "freq_factor_std",
            "read_noise_per_superpixel",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0 <= self.field_amplitude < 0.5:
            raise ConfigError("field_amplitude must lie in [0, 0.5)")
        if not self.field_correlation_length >= 1:
            raise ConfigError("field_correlation_length must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = self.grid.to_manifest()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generator settings: {sorted(unknown)}")
        if "grid" in data and isinstance(data["grid"], dict):
            data["grid"] = SuperpixelGrid.from_manifest(data["grid"])
        return cls(**data)

    def make_field(self) -> EfficiencyField:
        seed = self.seed if self.field_seed is None else self.field_seed
        return make_efficiency_field(self.grid, seed, self.field_amplitude, self.field_correlation_length)

    def noiseless(self) -> "GenConfig":
        """Copy with every noise and jitter source off; the Jz spread is kept."""
        return replace(
            self,
            atom_number_jitter=0.0,
            cavity_noise_theta=0.0,
            cloud_center_jitter=0.0,
            cloud_relative_jitter=0.0,
            freq_factor_std=0.0,
            read_noise_per_superpixel=0.0,
            shot_noise=False,
        )


@dataclass
class ShotTruth:
    shot_id: int
    true_jz: float
    true_n: float
    cloud_centers: tuple[tuple[float, float], tuple[float, float]]


def _interval_mass(edges: np.ndarray, center: float, sigma: float) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf((edges - center) / (sigma * math.sqrt(2.0))))
    return np.diff(cdf)


def cloud_profile(grid: SuperpixelGrid, center: tuple[float, float], sigma: float, side: int):
    """Fraction of a state's atoms in each superpixel, restricted to one half.

    Returns ``(fractions, leaked)`` where ``fractions`` sums to one over the
    half (``side`` -1 for left, +1 for right) and ``leaked`` is the Gaussian
    mass that fell outside the half before renormalisation.
    """
    row_mass = _interval_mass(np.arange(grid.rows + 1, dtype=float), center[0], sigma)
    col_mass = _interval_mass(np.arange(grid.cols + 1, dtype=float), center[1], sigma)
    on_side = (np.arange(grid.cols) < grid.left_cols) == (side < 0)
    col_mass = np.where(on_side, col_mass, 0.0)
    mass = np.outer(row_mass, col_mass).ravel()
    inside = mass.sum()
    if inside <= 0:
        raise ConfigError(f"cloud centred at {center} has no mass on its half of the sensor")
    return mass / inside, 1.0 - inside


def nominal_centers(grid: SuperpixelGrid) -> tuple[tuple[float, float], tuple[float, float]]:
    """Rest positions of the lower (left) and upper (right) clouds."""
    row = grid.rows / 2.0
    left = grid.left_cols / 2.0
    right = grid.left_cols + (grid.cols - grid.left_cols) / 2.0
    return (row, left), (row, right)


def generate_dataset(config: GenConfig, field: EfficiencyField | None = None):
    """Draw ``config.shots`` shots; returns ``(Dataset, list[ShotTruth])``."""
    grid = config.grid
    if field is None:
        field = EfficiencyField.uniform(grid)
    if field.grid != grid:
        raise ConfigError("efficiency field and generator use different grids")
    m = int(config.shots)
    rng = np.random.default_rng(config.seed)
    c = config.contrast

    true_n = config.mean_atoms * (1.0 + config.atom_number_jitter * rng.standard_normal(m))
    true_n = np.maximum(true_n, 1.0)
    half = c * true_n / 2.0
    rotated = rng.random(m) < config.prep_fraction
    spread = config.squeeze_spread_theta * rng.standard_normal(m)
    spread += np.where(rotated, config.prep_spread_theta * rng.standard_normal(m), 0.0)
    true_jz = (config.mean_theta + spread) * half
    true_jz = np.clip(true_jz, -true_n / 2.0, true_n / 2.0)
    freq = config.freq_factor_std * rng.standard_normal(m)
    cavity = true_jz - freq * true_n + config.cavity_noise_theta * half * rng.standard_normal(m)
    # common-mode shift of the whole cloud plus independent per-state shifts
    common = config.cloud_center_jitter * rng.standard_normal((m, 1, 2))
    jitter = common + config.cloud_relative_jitter * rng.standard_normal((m, 2, 2))

    rest = nominal_centers(grid)
    gain = config.counts_per_atom * field.values
    counts = np.empty((m, grid.n))
    truths = []
    worst_leak = 0.0
    for i in range(m):
        n_up = true_n[i] / 2.0 + true_jz[i]
        n_down = true_n[i] / 2.0 - true_jz[i]
        centers = (
            (rest[0][0] + jitter[i, 0, 0], rest[0][1] + jitter[i, 0, 1]),
            (rest[1][0] + jitter[i, 1, 0], rest[1][1] + jitter[i, 1, 1]),
        )
        down, leak_d = cloud_profile(grid, centers[0], config.cloud_sigma, -1)
        up, leak_u = cloud_profile(grid, centers[1], config.cloud_sigma, +1)
        worst_leak = max(worst_leak, leak_d, leak_u)
        counts[i] = (n_down * down + n_up * up) * gain
        truths.append(ShotTruth(i, float(true_jz[i]), float(true_n[i]), centers))

    shot_noise = rng.standard_normal((m, grid.n))
    read_noise = rng.standard_normal((m, grid.n))
    if config.shot_noise:
        counts = counts + np.sqrt(counts) * shot_noise
    counts = counts + config.read_noise_per_superpixel * read_noise
    np.maximum(counts, 0.0, out=counts)

    if worst_leak > config.leak_tolerance:
        warnings.warn(
            f"cloud mass outside its half reached {worst_leak:.1%} "
            f"(tolerance {config.leak_tolerance:.1%}); profiles were renormalised",
            stacklevel=2,
        )

    dataset = Dataset(
        grid=grid,
        shot_ids=np.arange(m),
        cavity_jz=cavity,
        freq_factor=freq,
        counts=counts,
        contrast=c,
        counts_scale=config.counts_per_atom,
        meta={"seed": int(config.seed)},
    )
    return dataset, truths


def generate_world(config: GenConfig):
    """Field from the config's field settings plus a dataset drawn in it.

    Returns ``(field, dataset, truths)``.
    """
    field = config.make_field()
    dataset, truths = generate_dataset(config, field)
    return field, dataset, truths


def analytic_noise_floor(config: GenConfig) -> float:
    """Fluorescence-only theta noise at the mean atom number.

    With weights ``1 / counts_per_atom`` the population-difference variance
    is a quarter of the summed count variance, ``N * kappa + n * sigma_r^2``,
    over ``kappa^2``; dividing by ``C N / 2`` gives radians.
    """
    kappa = config.counts_per_atom
    n_atoms = config.mean_atoms
    var_counts = n_atoms * kappa + config.grid.n * config.read_noise_per_superpixel**2
    sigma_jz = 0.5 * math.sqrt(var_counts) / kappa
    return sigma_jz / (config.contrast * n_atoms / 2.0)


def render_image(counts: np.ndarray, grid: SuperpixelGrid) -> np.ndarray:
    """Debug full-resolution image: each block's counts spread evenly over its pixels."""
    counts = np.asarray(counts, dtype=float).reshape(grid.rows, grid.cols)
    per_pixel = counts / grid.block_size**2
    return np.kron(per_pixel, np.ones((grid.block_size, grid.block_size)))
