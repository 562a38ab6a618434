"""Training objective: cutoff-weighted least squares plus a nearest-neighbour
smoothness penalty on the superpixel weights, with its exact gradient.

For shot ``i`` the residual is

    r_i = b0 + sum_j (s_j / 2 - f_i) c_ij b_j - J_i

where ``s_j`` is the superpixel side sign, ``f_i`` the frequency factor and
``J_i`` the raw cavity reading.  The ``-f_i c_ij`` part comes from the
frequency-corrected target depending on the estimated atom number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import CalibrationError, NoSamplesError, NonFiniteError
from .grid import EdgeSet
from .model import BetaMap


@dataclass(frozen=True)
class Hyperparams:
    """Regularisation strength and cavity-magnitude cutoff (atoms).

    With ``normalize`` set, residuals are divided by the mean ``|cavity_jz|``
    of the weighted shots before squaring, so the data term is dimensionless
    and ``lam`` does not have to track the squared size of the training
    signal.
    """

    lam: float = 20.0
    jz_cutoff: float = 200.0
    normalize: bool = True

    def __post_init__(self):
        for name in ("lam", "jz_cutoff"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise CalibrationError(f"{name} must be finite and nonnegative, got {value!r}")


@dataclass
class CostEval:
    value: float
    grad_bias: float
    grad_values: np.ndarray
    m_c: int

    @property
    def gradient(self) -> np.ndarray:
        return np.concatenate([[self.grad_bias], self.grad_values])


def sample_weight(cavity_jz, cutoff: float):
    """Heaviside weight on the raw cavity magnitude, with H(0) = 1."""
    return (np.abs(np.asarray(cavity_jz, dtype=float)) >= cutoff).astype(float)


def nn_penalty(beta: BetaMap | np.ndarray, edges: EdgeSet) -> float:
    values = beta.values if isinstance(beta, BetaMap) else np.asarray(beta, dtype=float)
    diff = values[edges.edges[:, 1]] - values[edges.edges[:, 0]]
    return float(diff @ diff)


def residual_scale(cavity_jz) -> float:
    scale = float(np.mean(np.abs(cavity_jz)))
    if not scale > 0:
        raise NoSamplesError("cannot normalise residuals: weighted cavity readings are all zero")
    return scale


def design_matrix(dataset: Dataset) -> np.ndarray:
    """Rows ``(1, (s_j/2 - f_i) c_ij)``; residuals are ``A @ p - cavity_jz``."""
    coef = 0.5 * dataset.grid.signs[None, :] - dataset.freq_factor[:, None]
    return np.hstack([np.ones((len(dataset), 1)), coef * dataset.counts])


class CostFunction:
    """Value-and-gradient callable over ``p = [b0, b_1..b_n]``.

    The design matrix is built once, restricted to shots with nonzero weight;
    zero-weight shots never enter the value or the gradient.
    """

    def __init__(self, dataset: Dataset, hyper: Hyperparams, edges: EdgeSet):
        weights = sample_weight(dataset.cavity_jz, hyper.jz_cutoff)
        self.m_c = int(weights.sum())
        if self.m_c == 0:
            raise NoSamplesError(
                f"no training samples above cutoff {hyper.jz_cutoff:g} ({len(dataset)} shots)"
            )
        keep = weights > 0
        self.scale = residual_scale(dataset.cavity_jz[keep]) if hyper.normalize else 1.0
        self.design = design_matrix(dataset)[keep] / self.scale
        self.target = dataset.cavity_jz[keep] / self.scale
        self.lam = hyper.lam
        self.edges = edges
        self.evaluations = 0

    def residuals(self, params: np.ndarray) -> np.ndarray:
        """Residuals in units of ``scale`` atoms."""
        return self.design @ params - self.target

    def data_term(self, params: np.ndarray) -> float:
        """First term of the objective: half the mean squared (scaled) residual."""
        r = self.residuals(params)
        return float(r @ r) / (2.0 * self.m_c)

    def __call__(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        self.evaluations += 1
        params = np.asarray(params, dtype=float)
        r = self.residuals(params)
        values = params[1:]
        value = (float(r @ r) + self.lam * nn_penalty(values, self.edges)) / (2.0 * self.m_c)
        grad = self.design.T @ r
        grad[1:] += self.lam * self.edges.apply_laplacian(values)
        grad /= self.m_c
        if not (np.isfinite(value) and np.isfinite(grad).all()):
            raise NonFiniteError("objective or gradient is not finite")
        return value, grad


def cost_and_gradient(
    beta: BetaMap, shots: Dataset, hyper: Hyperparams, edges: EdgeSet
) -> CostEval:
    fn = CostFunction(shots, hyper, edges)
    value, grad = fn(beta.parameters)
    return CostEval(value=value, grad_bias=float(grad[0]), grad_values=grad[1:], m_c=fn.m_c)
