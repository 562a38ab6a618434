"""Dense BFGS minimizer with a strong-Wolfe line search.

The line search is the bracketing/zoom scheme of Nocedal & Wright
(Numerical Optimization, algorithms 3.5 and 3.6) with safeguarded cubic
interpolation.  The inverse-Hessian approximation is kept dense; problems
here have at most a few hundred parameters.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteError
from .grid import SuperpixelGrid

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class Termination(str, enum.Enum):
    STEP = "step-tolerance"
    OBJECTIVE = "objective-tolerance"
    GRADIENT = "gradient-tolerance"
    ITERATIONS = "iteration-limit"
    EVALUATIONS = "evaluation-limit"
    CLOSED_FORM = "closed-form"


@dataclass(frozen=True)
class OptimizerSettings:
    tol_step: float = 1e-7
    tol_objective: float = 1e-7
    max_iterations: int = 100_000
    max_evaluations: int = 500_000
    tol_gradient: float = 1e-9
    c1: float = 1e-4
    c2: float = 0.9

    def __post_init__(self):
        for name in ("tol_step", "tol_objective", "max_iterations", "max_evaluations", "tol_gradient"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line search constants need 0 < c1 < c2 < 1")


@dataclass
class OptimizationReport:
    final_parameters: np.ndarray
    final_value: float
    iterations: int
    evaluations: int
    termination: Termination
    gradient_norm: float

    @property
    def converged(self) -> bool:
        return self.termination not in (Termination.ITERATIONS, Termination.EVALUATIONS)


def initial_beta(grid: SuperpixelGrid) -> np.ndarray:
    """Starting point: zero bias, unit weight on every superpixel."""
    return np.concatenate([[0.0], np.ones(grid.n)])


class _EvaluationLimit(Exception):
    pass


class _Counter:
    def __init__(self, fun: Objective, limit: int):
        self.fun = fun
        self.limit = limit
        self.count = 0

    def __call__(self, x):
        if self.count >= self.limit:
            raise _EvaluationLimit
        self.count += 1
        f, g = self.fun(x)
        f = float(f)
        g = np.asarray(g, dtype=float)
        if not (np.isfinite(f) and np.isfinite(g).all()):
            raise NonFiniteError(f"objective returned non-finite value or gradient after {self.count} evaluations")
        return f, g


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb), or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _interpolate(lo, flo, glo, hi, fhi, ghi):
    t = _cubic_min(lo, flo, glo, hi, fhi, ghi)
    left, right = min(lo, hi), max(lo, hi)
    width = right - left
    if t is None or not np.isfinite(t) or t < left + 0.1 * width or t > right - 0.1 * width:
        t = 0.5 * (lo + hi)
    return t


def _line_search(fun, x, f0, g0, direction, alpha0, c1, c2, max_steps=60):
    """Return ``(alpha, f, g)`` satisfying the strong Wolfe conditions.

    Falls back to the best sufficient-decrease point found; returns ``None``
    when no decrease at all could be obtained.
    """
    dphi0 = float(g0 @ direction)
    best = None

    def phi(alpha):
        f, g = fun(x + alpha * direction)
        return f, g, float(g @ direction)

    def zoom(lo, flo, glo, dlo, hi, fhi, dhi):
        nonlocal best
        for _ in range(max_steps):
            alpha = _interpolate(lo, flo, dlo, hi, fhi, dhi)
            f, g, d = phi(alpha)
            if f > f0 + c1 * alpha * dphi0 or f >= flo:
                hi, fhi, dhi = alpha, f, d
            else:
                if best is None or f < best[1]:
                    best = (alpha, f, g)
                if abs(d) <= -c2 * dphi0:
                    return alpha, f, g
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, glo, dlo = alpha, f, g, d
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                break
        return best

    prev_alpha, prev_f, prev_g, prev_d = 0.0, f0, g0, dphi0
    alpha = alpha0
    for i in range(max_steps):
        f, g, d = phi(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= prev_f):
            return zoom(prev_alpha, prev_f, prev_g, prev_d, alpha, f, d)
        if best is None or f < best[1]:
            best = (alpha, f, g)
        if abs(d) <= -c2 * dphi0:
            return alpha, f, g
        if d >= 0:
            return zoom(alpha, f, g, d, prev_alpha, prev_f, prev_d)
        prev_alpha, prev_f, prev_g, prev_d = alpha, f, g, d
        alpha *= 2.0
    return best


def minimize(objective: Objective, initial, settings: OptimizerSettings | None = None) -> OptimizationReport:
    """Minimize a smooth function given its value and gradient.

    ``objective(x)`` must return ``(value, gradient)``.  Stops when the
    gradient falls below ``tol_gradient``, or when the step or the objective
    decrease falls below its tolerance at a point whose gradient infinity
    norm is at most ``tol_objective * (1 + |f|)``.  Iteration and evaluation
    limits end the run with a limit tag (reported, not raised).
    """
    settings = settings or OptimizerSettings()
    fun = _Counter(objective, settings.max_evaluations)
    x = np.array(initial, dtype=float)
    n = x.size
    f, g = fun(x)
    H = np.eye(n)
    scaled = False
    iterations = 0
    termination = None

    def grad_small(f, g):
        return np.max(np.abs(g)) <= settings.tol_gradient * max(1.0, abs(f))

    if grad_small(f, g):
        termination = Termination.GRADIENT

    try:
        while termination is None:
            if iterations >= settings.max_iterations:
                termination = Termination.ITERATIONS
                break
            direction = -H @ g
            if g @ direction >= 0:
                # lost positive definiteness; restart from steepest descent
                H = np.eye(n)
                scaled = False
                direction = -g
            alpha0 = 1.0 if scaled else min(1.0, 1.0 / np.max(np.abs(g)))
            found = _line_search(fun, x, f, g, direction, alpha0, settings.c1, settings.c2)
            if found is None:
                if not scaled:
                    termination = Termination.STEP
                    break
                H = np.eye(n)
                scaled = False
                continue
            alpha, f_new, g_new = found
            s = alpha * direction
            y = g_new - g
            x = x + s
            iterations += 1
            decrease = f - f_new
            f, g = f_new, g_new

            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                if not scaled:
                    H = np.eye(n) * (sy / float(y @ y))
                    scaled = True
                rho = 1.0 / sy
                Hy = H @ y
                H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)

            # The step and decrease tests only count once the gradient is
            # also small relative to the objective; a stalled line search
            # on an ill-conditioned problem otherwise looks converged.
            stationary = np.max(np.abs(g)) <= settings.tol_objective * (1.0 + abs(f))
            if grad_small(f, g):
                termination = Termination.GRADIENT
            elif stationary and np.linalg.norm(s) <= settings.tol_step * (1.0 + np.linalg.norm(x)):
                termination = Termination.STEP
            elif stationary and abs(decrease) <= settings.tol_objective * (1.0 + abs(f)):
                termination = Termination.OBJECTIVE
    except _EvaluationLimit:
        termination = Termination.EVALUATIONS

    logger.debug("minimize: %s after %d iterations, %d evaluations, f=%.17g", termination.value, iterations, fun.count, f)
    return OptimizationReport(
        final_parameters=x,
        final_value=f,
        iterations=iterations,
        evaluations=fun.count,
        termination=termination,
        gradient_norm=float(np.linalg.norm(g)),
    )
