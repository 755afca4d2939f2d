"""Small dense Levenberg-Marquardt solver for few-parameter curve fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence


@dataclass(frozen=True)
class LeastSquaresResult:
    params: np.ndarray
    covariance: np.ndarray
    sse: float
    n_points: int
    iterations: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    lam0: float = 1e-3,
    factor: float = 10.0,
    max_iter: int = 200,
    rtol: float = 1e-10,
    lam_max: float = 1e16,
) -> LeastSquaresResult:
    """Minimise ``sum(residual(p)**2)``.

    Damping starts at ``lam0`` and is divided by ``factor`` after an accepted
    step and multiplied by it after a rejected one. The fit has converged when
    an accepted step lowers the SSE by less than ``rtol`` relative, or when no
    damping up to ``lam_max`` lowers it at all.

    The covariance is ``s**2 (J^T J)^-1`` with ``s**2 = SSE / (m - p)``.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    sse = float(r @ r)
    if not np.isfinite(sse):
        raise ValueError("residuals are not finite at the starting point")
    lam = lam0
    it = 0
    converged = sse == 0.0
    while not converged:
        if it >= max_iter:
            raise NoConvergence(it, sse)
        it += 1
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        scale = np.diag(A).copy()
        scale[scale == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                p_new = p + step
                r_new = residual(p_new)
                sse_new = float(r_new @ r_new)
                if np.isfinite(sse_new) and sse_new < sse:
                    break
            lam *= factor
            if lam > lam_max:
                converged = True
                break
        if converged:
            break
        rel = (sse - sse_new) / sse
        p, r, sse = p_new, r_new, sse_new
        lam /= factor
        if rel < rtol or sse == 0.0:
            converged = True

    J = jacobian(p)
    m, k = J.shape
    dof = m - k
    s2 = sse / dof if dof > 0 else np.nan
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = np.full((k, k), np.nan)
    return LeastSquaresResult(params=p, covariance=cov, sse=sse, n_points=m, iterations=it)


def numeric_jacobian(residual: Callable[[np.ndarray], np.ndarray], rel_step: float = 1e-6):
    """Central-difference Jacobian builder for ``residual``."""

    def jac(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        cols = []
        for i in range(p.size):
            h = rel_step * max(1.0, abs(p[i]))
            up = p.copy()
            dn = p.copy()
            up[i] += h
            dn[i] -= h
            cols.append((residual(up) - residual(dn)) / (2 * h))
        return np.column_stack(cols)

    return jac
