"""RBF Gaussian-process regression residuals and GP function sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "GpConfig",
    "NotPositiveDefiniteError",
    "rbf_kernel",
    "cholesky_solve",
    "gp_fit",
    "gp_ssr",
    "gp_sample_function",
]

MAX_JITTER = 1e-3


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed even at the largest jitter."""


@dataclass(frozen=True)
class GpConfig:
    """GP regression settings.

    Attributes:
        alpha: value added to the kernel diagonal (observation noise variance).
        length_scale_grid: candidate RBF length scales; the one with the
            highest log marginal likelihood is used.
        jitter: initial diagonal jitter for the Cholesky factorization.
    """

    alpha: float = 1.0
    length_scale_grid: tuple[float, ...] = field(default=(0.1, 0.3, 1.0, 3.0, 10.0))
    jitter: float = 1e-9

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.length_scale_grid or min(self.length_scale_grid) <= 0:
            raise ValueError("length_scale_grid must be a nonempty list of positive values")
        if not self.jitter > 0:
            raise ValueError("jitter must be positive")


def rbf_kernel(a, b, length_scale: float) -> np.ndarray:
    """``K[i, j] = exp(-||a_i - b_j||^2 / (2 l^2))``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError("a and b must have the same number of columns")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    np.maximum(sq, 0.0, out=sq)
    if a is b or (a.shape == b.shape and np.array_equal(a, b)):
        sq = 0.5 * (sq + sq.T)
        np.fill_diagonal(sq, 0.0)
    return np.exp(-sq / (2.0 * length_scale**2))


def _factor(spd: np.ndarray, jitter: float):
    """Lower Cholesky factor of ``spd + j*I`` with ``j`` escalated x10 from ``jitter``."""
    eye = np.eye(spd.shape[0])
    j = jitter
    while True:
        try:
            return linalg.cholesky(spd + j * eye, lower=True, check_finite=False), j
        except np.linalg.LinAlgError:
            j *= 10.0
            if j > MAX_JITTER * (1 + 1e-12):
                raise NotPositiveDefiniteError(
                    f"matrix is not positive definite up to jitter {MAX_JITTER:g}"
                ) from None


def cholesky_solve(spd, rhs, jitter: float = 1e-9) -> np.ndarray:
    """Solve ``(spd + jitter I) X = rhs``, escalating the jitter if the factorization fails."""
    spd = np.asarray(spd, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    L, _ = _factor(spd, jitter)
    return linalg.cho_solve((L, True), rhs, check_finite=False)


def gp_fit(inputs, y, cfg: GpConfig):
    """Fit a zero-mean GP to centred ``y``; pick the length scale by marginal likelihood.

    Returns ``(fitted, length_scale, log_marginal_likelihood)`` where
    ``fitted`` is the posterior mean at the training inputs (mean added back).
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    mean = y.mean()
    yc = y - mean
    best = None
    # Descending order + strict improvement: ties go to the smoother kernel.
    for ls in sorted(cfg.length_scale_grid, reverse=True):
        K = rbf_kernel(X, X, ls)
        L, _ = _factor(K + cfg.alpha * np.eye(n), cfg.jitter)
        a = linalg.cho_solve((L, True), yc, check_finite=False)
        lml = -0.5 * yc @ a - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
        if best is None or lml > best[2]:
            best = (K @ a + mean, ls, float(lml))
    return best


def gp_ssr(data, node: int, parents, cfg: GpConfig | None = None) -> float:
    """In-sample residual sum of squares of a GP regression of ``node`` on ``parents``."""
    cfg = cfg or GpConfig()
    x = data.x if hasattr(data, "x") else np.asarray(data, dtype=np.float64)
    y = x[:, node]
    parents = sorted(parents)
    if not parents:
        r = y - y.mean()
        return float(r @ r)
    fitted, _, _ = gp_fit(x[:, parents], y, cfg)
    r = y - fitted
    return float(r @ r)


def gp_sample_function(inputs, length_scale: float, rng, jitter: float = 1e-9) -> np.ndarray:
    """One draw of ``f(inputs)`` from a zero-mean GP with an RBF kernel."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 1:
        raise ValueError("need at least one input")
    K = rbf_kernel(X, X, length_scale)
    L, _ = _factor(K, jitter)
    return L @ rng.standard_normal(X.shape[0])
