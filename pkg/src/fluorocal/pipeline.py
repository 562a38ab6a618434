"""Training, evaluation, hyperparameter sweeps and baselines."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cost import CostFunction, Hyperparams, sample_weight
from .dataset import Dataset
from .errors import CalibrationError, NoSamplesError
from .grid import neighbor_edges
from .model import BetaMap, corrected_cavity_jz, estimate_jz, estimate_n
from .optimizer import OptimizationReport, OptimizerSettings, Termination, initial_beta, minimize
from . import oracle

__all__ = [
    "Dataset",
    "SplitSpec",
    "Metrics",
    "TrainResult",
    "split",
    "train",
    "evaluate",
    "baseline_uniform",
    "baseline_single_ratio",
    "fit_single_ratio",
    "fit_position_ratio",
    "SweepAxis",
    "SweepPoint",
    "SweepReport",
    "sweep_lambda",
    "sweep_cutoff",
    "learning_curve",
    "data_error",
    "compare_methods",
    "variance_reduction",
    "covered_superpixels",
    "map_correlation",
]

DEFAULT_LAMBDAS = (0.1, 1.0, 5.0, 20.0, 100.0, 1000.0)
DEFAULT_CUTOFFS = (0.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0)
DEFAULT_SIZES = (1, 2, 5, 10, 20, 40, 60, 80, 100, 117)


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    validation_count: int
    shuffle_seed: int | None = None  # None keeps dataset order


@dataclass
class Metrics:
    delta_theta: float
    db_below_qpn: float
    mean_n: float
    sample_count: int
    delta_theta_stderr: float

    def as_row(self) -> dict:
        return {
            "delta_theta": self.delta_theta,
            "delta_theta_stderr": self.delta_theta_stderr,
            "db_below_qpn": self.db_below_qpn,
            "mean_n": self.mean_n,
            "sample_count": self.sample_count,
        }


@dataclass
class TrainResult:
    beta: BetaMap
    report: OptimizationReport
    m_c: int
    hyper: Hyperparams
    state: dict = field(default_factory=dict)


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    total = len(dataset)
    if spec.train_count < 0 or spec.validation_count < 0:
        raise CalibrationError("split counts must be nonnegative")
    if spec.train_count + spec.validation_count > total:
        raise CalibrationError(
            f"split asks for {spec.train_count} + {spec.validation_count} shots, dataset has {total}"
        )
    order = np.arange(total)
    if spec.shuffle_seed is not None:
        order = np.random.default_rng(spec.shuffle_seed).permutation(total)
    a = spec.train_count
    b = a + spec.validation_count
    return dataset.subset(order[:a]), dataset.subset(order[a:b]), dataset.subset(order[b:])


def _to_beta(params: np.ndarray, dataset: Dataset) -> BetaMap:
    return BetaMap(
        bias=params[0],
        values=params[1:] / dataset.counts_scale,
        grid=dataset.grid,
        counts_scale=dataset.counts_scale,
    )


def _jacobi_scale(fn: CostFunction) -> np.ndarray:
    """Inverse square root of the objective's Hessian diagonal (1 where it vanishes)."""
    diag = (fn.design**2).sum(axis=0)
    diag[1:] += fn.lam * fn.edges.degree()
    diag /= fn.m_c
    out = np.ones_like(diag)
    ok = diag > 0
    out[ok] = 1.0 / np.sqrt(diag[ok])
    return out


def _minimize_scaled(fn: CostFunction, initial: np.ndarray, settings) -> OptimizationReport:
    """BFGS in variables ``x = p / d`` with Jacobi scaling ``d``; reported in ``p``."""
    d = _jacobi_scale(fn)

    def scaled(x):
        value, grad = fn(x * d)
        return value, grad * d

    report = minimize(scaled, initial / d, settings)
    report.final_parameters = report.final_parameters * d
    _, grad = fn(report.final_parameters)
    fn.evaluations -= 1
    report.gradient_norm = float(np.linalg.norm(grad))
    return report


def train(
    train_set: Dataset,
    hyper: Hyperparams,
    settings: OptimizerSettings | None = None,
    solver: str = "bfgs",
) -> TrainResult:
    """Fit the weight map on pre-scaled counts and return it in atoms per count.

    ``solver`` is ``"bfgs"`` (iterative, default) or ``"normal"`` (closed form).
    """
    scaled = train_set.scaled()
    edges = neighbor_edges(train_set.grid)
    fn = CostFunction(scaled, hyper, edges)
    if solver == "bfgs":
        if hyper.lam == 0 and np.linalg.matrix_rank(fn.design) < fn.design.shape[1]:
            warnings.warn(
                f"lam = 0 with rank-deficient design ({fn.m_c} weighted shots, "
                f"{fn.design.shape[1]} parameters): the minimizer is not unique",
                stacklevel=2,
            )
        report = _minimize_scaled(fn, initial_beta(train_set.grid), settings)
    elif solver == "normal":
        system = oracle.assemble(scaled, hyper, scaled.grid, edges)
        params = oracle.solve(system)
        value, grad = fn(params)
        report = OptimizationReport(params, value, 0, 1, Termination.CLOSED_FORM, float(np.linalg.norm(grad)))
    else:
        raise ValueError(f"unknown solver {solver!r}")
    beta = _to_beta(report.final_parameters, train_set)
    return TrainResult(beta=beta, report=report, m_c=fn.m_c, hyper=hyper)


def residual_theta(beta: BetaMap, dataset: Dataset):
    """Per-shot ``(theta_tilde, n_estimate)``."""
    jz = estimate_jz(beta, dataset.counts)
    n_est = estimate_n(beta, dataset.counts)
    target = corrected_cavity_jz(dataset.cavity_jz, dataset.freq_factor, n_est)
    if (n_est <= 0).any():
        raise CalibrationError("model predicts a nonpositive atom number")
    return (jz - target) / (dataset.contrast * n_est / 2.0), n_est


def db_below_qpn(delta_theta: float, mean_n: float) -> float:
    """``10 log10(QPN^2 / dtheta^2)`` with ``QPN = 1 / sqrt(N)``."""
    return 10.0 * math.log10((1.0 / mean_n) / delta_theta**2)


def metrics_from_theta(theta_tilde: np.ndarray, n_est: np.ndarray) -> Metrics:
    k = len(theta_tilde)
    if k < 2:
        raise NoSamplesError(f"need at least 2 shots to evaluate, got {k}")
    dtheta = float(np.std(theta_tilde, ddof=1))
    mean_n = float(np.mean(n_est))
    return Metrics(
        delta_theta=dtheta,
        db_below_qpn=db_below_qpn(dtheta, mean_n),
        mean_n=mean_n,
        sample_count=k,
        delta_theta_stderr=dtheta / math.sqrt(2.0 * (k - 1)),
    )


def evaluate(
    beta: BetaMap,
    eval_set: Dataset,
    exclude_above_cutoff: bool = False,
    hyper: Hyperparams | None = None,
) -> Metrics:
    """Spread of the model-minus-cavity angle over ``eval_set``.

    With ``exclude_above_cutoff`` only shots with ``|cavity_jz| < cutoff`` count.
    """
    if exclude_above_cutoff:
        if hyper is None:
            raise CalibrationError("exclude_above_cutoff needs hyperparameters")
        keep = sample_weight(eval_set.cavity_jz, hyper.jz_cutoff) == 0
        eval_set = eval_set.subset(np.flatnonzero(keep))
    if len(eval_set) < 2:
        raise NoSamplesError(f"need at least 2 shots to evaluate, got {len(eval_set)}")
    theta_tilde, n_est = residual_theta(beta, eval_set)
    return metrics_from_theta(theta_tilde, n_est)


def baseline_uniform(eval_set: Dataset, exclude_above_cutoff: bool = False, hyper: Hyperparams | None = None) -> Metrics:
    """No correction: every superpixel weighted by ``1 / counts_scale``."""
    if len(eval_set) == 0:
        raise NoSamplesError("empty evaluation set")
    beta = BetaMap.uniform(eval_set.grid, 1.0 / eval_set.counts_scale)
    return evaluate(beta, eval_set, exclude_above_cutoff, hyper)


def fit_single_ratio(train_set: Dataset, cutoff: float) -> BetaMap:
    """One multiplier on all right-half counts, left half fixed at ``1/counts_scale``.

    Minimizes the cutoff-weighted squared residual; it is linear in the
    multiplier, so the fit is closed form.
    """
    w = sample_weight(train_set.cavity_jz, cutoff)
    if w.sum() == 0:
        raise NoSamplesError(f"no training samples above cutoff {cutoff:g}")
    kappa = train_set.counts_scale
    right = train_set.grid.signs > 0
    up = train_set.counts[:, right].sum(axis=1) / kappa
    down = train_set.counts[:, ~right].sum(axis=1) / kappa
    f = train_set.freq_factor
    u = up * (0.5 - f)
    v = down * (0.5 + f) + train_set.cavity_jz
    ratio = float((w * u * v).sum() / (w * u * u).sum())
    values = np.where(right, ratio, 1.0) / kappa
    return BetaMap(bias=0.0, values=values, grid=train_set.grid, counts_scale=kappa)


@dataclass
class PositionRatio:
    """Right-half weight set per shot by the mean atom position.

    The multiplier on right-half counts for a shot whose count-weighted
    centroid is ``(r, c)`` (superpixel units) is
    ``ratio + slope_row * (r - center[0]) + slope_col * (c - center[1])``.
    """

    ratio: float
    slope_row: float
    slope_col: float
    center: tuple[float, float]
    counts_scale: float

    def multipliers(self, dataset: Dataset) -> np.ndarray:
        r, c = count_centroids(dataset)
        return self.ratio + self.slope_row * (r - self.center[0]) + self.slope_col * (c - self.center[1])


def count_centroids(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Count-weighted mean superpixel position ``(row, col)`` of every shot."""
    grid = dataset.grid
    rows, cols = np.divmod(np.arange(grid.n), grid.cols)
    total = dataset.counts.sum(axis=1)
    if (total <= 0).any():
        raise CalibrationError("cannot locate a shot with no counts")
    r = dataset.counts @ (rows + 0.5) / total
    c = dataset.counts @ (cols + 0.5) / total
    return r, c


def _ratio_terms(dataset: Dataset):
    kappa = dataset.counts_scale
    right = dataset.grid.signs > 0
    up = dataset.counts[:, right].sum(axis=1) / kappa
    down = dataset.counts[:, ~right].sum(axis=1) / kappa
    f = dataset.freq_factor
    # residual is  multiplier * u - v
    return up * (0.5 - f), down * (0.5 + f) + dataset.cavity_jz, up * (1.0 - f), down * (1.0 - f)


def fit_position_ratio(train_set: Dataset, cutoff: float) -> PositionRatio:
    """Least-squares fit of the position-dependent right-half multiplier."""
    w = sample_weight(train_set.cavity_jz, cutoff) > 0
    if w.sum() < 3:
        raise NoSamplesError(f"need at least 3 training samples above cutoff {cutoff:g}, got {int(w.sum())}")
    u, v, _, _ = _ratio_terms(train_set)
    r, c = count_centroids(train_set)
    center = (float(r[w].mean()), float(c[w].mean()))
    design = np.column_stack([u, u * (r - center[0]), u * (c - center[1])])[w]
    coef, *_ = np.linalg.lstsq(design, v[w], rcond=None)
    return PositionRatio(float(coef[0]), float(coef[1]), float(coef[2]), center, train_set.counts_scale)


def position_ratio_theta(model: PositionRatio, dataset: Dataset):
    """Per-shot ``(theta_tilde, n_estimate)`` under the position-ratio baseline."""
    rho = model.multipliers(dataset)
    _, _, up_n, down_n = _ratio_terms(dataset)
    kappa = dataset.counts_scale
    right = dataset.grid.signs > 0
    up = dataset.counts[:, right].sum(axis=1) / kappa
    down = dataset.counts[:, ~right].sum(axis=1) / kappa
    jz = 0.5 * (rho * up - down)
    n_est = rho * up + down
    if (n_est <= 0).any():
        raise CalibrationError("baseline predicts a nonpositive atom number")
    target = corrected_cavity_jz(dataset.cavity_jz, dataset.freq_factor, n_est)
    return (jz - target) / (dataset.contrast * n_est / 2.0), n_est


def _below_cutoff(dataset: Dataset, cutoff: float) -> Dataset:
    keep = sample_weight(dataset.cavity_jz, cutoff) == 0
    return dataset.subset(np.flatnonzero(keep))


def baseline_single_ratio(
    train_set: Dataset,
    eval_set: Dataset,
    cutoff: float,
    exclude_above_cutoff: bool = False,
    position_dependent: bool = True,
) -> Metrics:
    """Prior-method baseline: one weight on all right-half counts.

    By default the weight follows each shot's mean atom position
    (:func:`fit_position_ratio`); with ``position_dependent=False`` it is the
    single static multiplier of :func:`fit_single_ratio`.
    """
    if not position_dependent:
        beta = fit_single_ratio(train_set, cutoff)
        return evaluate(beta, eval_set, exclude_above_cutoff, Hyperparams(0.0, cutoff))
    model = fit_position_ratio(train_set, cutoff)
    if exclude_above_cutoff:
        eval_set = _below_cutoff(eval_set, cutoff)
    if len(eval_set) < 2:
        raise NoSamplesError(f"need at least 2 shots to evaluate, got {len(eval_set)}")
    return metrics_from_theta(*position_ratio_theta(model, eval_set))


class SweepAxis(str, enum.Enum):
    LAMBDA = "lambda"
    CUTOFF = "cutoff"
    SAMPLE_SIZE = "sample-size"


@dataclass
class SweepPoint:
    value: float
    metrics: Metrics | None
    training_error: float
    validation_error: float
    m_c: int


@dataclass
class SweepReport:
    axis: SweepAxis
    points: list[SweepPoint]
    fixed: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def delta_theta(self) -> np.ndarray:
        return np.array([p.metrics.delta_theta if p.metrics else np.nan for p in self.points])

    def best(self) -> SweepPoint:
        return self.points[int(np.nanargmin(self.delta_theta()))]

    def has_interior_minimum(self) -> bool:
        """True when the smallest validation spread is at neither end of the sweep."""
        dt = self.delta_theta()
        if len(dt) < 3 or np.isnan(dt).all():
            return False
        k = int(np.nanargmin(dt))
        return 0 < k < len(dt) - 1


def data_error(beta: BetaMap, dataset: Dataset, cutoff: float) -> float:
    """First term of the objective in squared atoms: half the mean squared
    residual over shots with ``|cavity_jz| >= cutoff`` (NaN if there are none)."""
    keep = sample_weight(dataset.cavity_jz, cutoff) > 0
    if not keep.any():
        return float("nan")
    sub = dataset.subset(np.flatnonzero(keep))
    n_est = estimate_n(beta, sub.counts)
    r = estimate_jz(beta, sub.counts) - corrected_cavity_jz(sub.cavity_jz, sub.freq_factor, n_est)
    return float(r @ r) / (2.0 * len(r))


def _sweep_point(value, train_set, validation, hyper, settings, solver) -> SweepPoint:
    result = train(train_set, hyper, settings, solver)
    metrics = evaluate(result.beta, validation) if len(validation) >= 2 else None
    return SweepPoint(
        value=float(value),
        metrics=metrics,
        training_error=data_error(result.beta, train_set, hyper.jz_cutoff),
        validation_error=data_error(result.beta, validation, hyper.jz_cutoff),
        m_c=result.m_c,
    )


def sweep_lambda(
    train_set: Dataset,
    validation: Dataset,
    cutoff: float,
    lambda_values=DEFAULT_LAMBDAS,
    settings: OptimizerSettings | None = None,
    solver: str = "bfgs",
    normalize: bool = True,
) -> SweepReport:
    """Train one model per ``lam`` at fixed cutoff; score on all validation shots."""
    if len(lambda_values) == 0:
        raise CalibrationError("empty lambda grid")
    points = [
        _sweep_point(lam, train_set, validation, Hyperparams(float(lam), cutoff, normalize), settings, solver)
        for lam in lambda_values
    ]
    return SweepReport(SweepAxis.LAMBDA, points, {"cutoff": float(cutoff)})


def sweep_cutoff(
    train_set: Dataset,
    validation: Dataset,
    lam: float,
    cutoff_values=DEFAULT_CUTOFFS,
    settings: OptimizerSettings | None = None,
    solver: str = "bfgs",
    normalize: bool = True,
) -> SweepReport:
    """Train one model per cutoff at fixed ``lam``; ``m_c`` is recorded per point."""
    if len(cutoff_values) == 0:
        raise CalibrationError("empty cutoff grid")
    points = [
        _sweep_point(c, train_set, validation, Hyperparams(lam, float(c), normalize), settings, solver)
        for c in cutoff_values
    ]
    return SweepReport(SweepAxis.CUTOFF, points, {"lambda": float(lam)})


def learning_curve(
    train_set: Dataset,
    validation: Dataset,
    hyper: Hyperparams,
    sizes=DEFAULT_SIZES,
    shuffle_seed: int = 0,
    settings: OptimizerSettings | None = None,
    solver: str = "bfgs",
) -> SweepReport:
    """Training and validation error against the number of weighted samples.

    Training shots are shuffled with ``shuffle_seed``; each size takes the
    first ``size`` nonzero-weight shots in that order.
    """
    order = np.random.default_rng(shuffle_seed).permutation(len(train_set))
    weighted = order[sample_weight(train_set.cavity_jz[order], hyper.jz_cutoff) > 0]
    points = []
    for size in sizes:
        size = int(size)
        if size < 1:
            raise CalibrationError(f"learning-curve sizes must be positive, got {size}")
        if size > len(weighted):
            raise NoSamplesError(
                f"size {size} exceeds the {len(weighted)} training samples above cutoff {hyper.jz_cutoff:g}"
            )
        subset = train_set.subset(weighted[:size])
        result = train(subset, hyper, settings, solver)
        metrics = evaluate(result.beta, validation) if len(validation) >= 2 else None
        points.append(
            SweepPoint(
                value=float(size),
                metrics=metrics,
                training_error=data_error(result.beta, subset, hyper.jz_cutoff),
                validation_error=data_error(result.beta, validation, hyper.jz_cutoff),
                m_c=result.m_c,
            )
        )
    return SweepReport(
        SweepAxis.SAMPLE_SIZE,
        points,
        {"lambda": hyper.lam, "cutoff": hyper.jz_cutoff, "shuffle_seed": shuffle_seed},
    )


def variance_reduction(model: Metrics, reference: Metrics) -> float:
    """Fractional variance reduction ``1 - (dtheta_model / dtheta_ref)^2``."""
    return 1.0 - (model.delta_theta / reference.delta_theta) ** 2


def compare_methods(
    beta: BetaMap,
    train_set: Dataset,
    eval_set: Dataset,
    hyper: Hyperparams,
    exclude_above_cutoff: bool = True,
) -> dict[str, Metrics]:
    """Table rows for no correction, the single-ratio baseline and the trained map.

    ``eval_set`` may come from a different dataset than ``train_set``
    (transfer); the baseline is always fitted on ``train_set``.
    """
    return {
        "no-correction": baseline_uniform(eval_set, exclude_above_cutoff, hyper),
        "single-ratio": baseline_single_ratio(train_set, eval_set, hyper.jz_cutoff, exclude_above_cutoff),
        "supervised": evaluate(beta, eval_set, exclude_above_cutoff, hyper),
    }


def covered_superpixels(dataset: Dataset, fraction: float = 0.05) -> np.ndarray:
    """Mask of superpixels whose mean counts reach ``fraction`` of the maximum."""
    mean = dataset.counts.mean(axis=0)
    return mean >= fraction * mean.max()


def map_correlation(beta: BetaMap, efficiency: np.ndarray, dataset: Dataset, fraction: float = 0.05) -> float:
    """Count-weighted Pearson correlation of ``beta`` with ``1 / efficiency``
    over the superpixels that ``dataset`` covers."""
    mask = covered_superpixels(dataset, fraction)
    w = dataset.counts.mean(axis=0)[mask]
    x = beta.values[mask]
    y = 1.0 / np.asarray(efficiency, dtype=float)[mask]
    mx, my = np.average(x, weights=w), np.average(y, weights=w)
    cov = np.average((x - mx) * (y - my), weights=w)
    return float(cov / np.sqrt(np.average((x - mx) ** 2, weights=w) * np.average((y - my) ** 2, weights=w)))
