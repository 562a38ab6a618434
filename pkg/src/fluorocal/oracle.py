"""Normal-equation solution of the (exactly quadratic) training objective.

Writing ``p = [b0, b_1..b_n]`` the objective is

    G(p) = 1/2 p^T H p - b^T p + const

with ``H = (1/m_c) sum_i w_i a_i a_i^T / s^2 + (lam/m_c) L_hat``, where ``s``
is the residual normalisation (mean weighted ``|cavity_jz|``, or 1).  The rows are
accumulated shot by shot here, independently of the vectorised cost code,
so the two can check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cost import Hyperparams
from .dataset import Dataset
from .errors import NoSamplesError, SingularSystemError
from .grid import EdgeSet, SuperpixelGrid


@dataclass
class QuadraticSystem:
    hessian: np.ndarray
    linear_term: np.ndarray
    constant: float
    m_c: int
    scale: float = 1.0

    def value(self, params) -> float:
        p = np.asarray(params, dtype=float)
        return float(0.5 * p @ self.hessian @ p - self.linear_term @ p + self.constant)

    def gradient(self, params) -> np.ndarray:
        return self.hessian @ np.asarray(params, dtype=float) - self.linear_term


def _embedded_laplacian(grid: SuperpixelGrid, edges: EdgeSet) -> np.ndarray:
    lap = np.zeros((grid.n + 1, grid.n + 1))
    for a, b in edges.edges:
        lap[a + 1, a + 1] += 1.0
        lap[b + 1, b + 1] += 1.0
        lap[a + 1, b + 1] -= 1.0
        lap[b + 1, a + 1] -= 1.0
    return lap


def assemble(shots: Dataset, hyper: Hyperparams, grid: SuperpixelGrid, edges: EdgeSet) -> QuadraticSystem:
    n = grid.n
    signs = np.array([-1.0 if (j % grid.cols) < grid.left_cols else 1.0 for j in range(n)])
    gram = np.zeros((n + 1, n + 1))
    moment = np.zeros(n + 1)
    constant = 0.0
    m_c = 0
    magnitude = 0.0
    for cavity, freq, counts in zip(shots.cavity_jz, shots.freq_factor, shots.counts):
        if abs(cavity) < hyper.jz_cutoff:
            continue
        m_c += 1
        magnitude += abs(cavity)
        row = np.empty(n + 1)
        row[0] = 1.0
        row[1:] = (signs / 2.0 - freq) * counts
        gram += np.outer(row, row)
        moment += cavity * row
        constant += cavity * cavity
    if m_c == 0:
        raise NoSamplesError(f"no training samples above cutoff {hyper.jz_cutoff:g}")
    s2 = (magnitude / m_c) ** 2 if hyper.normalize else 1.0
    if s2 == 0:
        raise NoSamplesError("cannot normalise residuals: weighted cavity readings are all zero")
    hessian = (gram / s2 + hyper.lam * _embedded_laplacian(grid, edges)) / m_c
    hessian = 0.5 * (hessian + hessian.T)
    return QuadraticSystem(
        hessian=hessian,
        linear_term=moment / (s2 * m_c),
        constant=constant / (2.0 * s2 * m_c),
        m_c=m_c,
        scale=float(np.sqrt(s2)),
    )


def solve(system: QuadraticSystem) -> np.ndarray:
    """Minimizer ``H^-1 b`` by Cholesky; refuses singular or indefinite H."""
    try:
        factor = scipy.linalg.cho_factor(system.hessian, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"hessian is not positive definite ({exc}); cannot solve normal equations") from None
    diag = np.abs(np.diag(factor[0]))
    ratio = (diag.min() / diag.max()) ** 2
    if ratio < 1e-15:
        raise SingularSystemError(f"hessian numerically singular (pivot ratio {ratio:.2e})")
    params = scipy.linalg.cho_solve(factor, system.linear_term)
    # one step of iterative refinement
    resid = system.linear_term - system.hessian @ params
    params = params + scipy.linalg.cho_solve(factor, resid)
    return params
