"""Pruning of a discovered DAG: weight thresholding and Fisher-z CI tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dag_core import CyclicGraphError, is_acyclic

__all__ = [
    "PruneConfig",
    "estimate_weights",
    "prune_threshold",
    "prune_ci",
    "fisher_z_pvalue",
    "partial_correlation",
    "prune",
]


@dataclass(frozen=True)
class PruneConfig:
    method: str = "THRESHOLD"
    threshold: float = 0.3
    ci_alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.method not in ("THRESHOLD", "CI", "NONE"):
            raise ValueError(f"unknown prune method {self.method!r}")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if not 0 < self.ci_alpha < 1:
            raise ValueError("ci_alpha must lie in (0, 1)")

    @classmethod
    def parse(cls, text: str | None) -> "PruneConfig":
        """Parse ``none``, ``threshold[:delta]`` or ``ci[:alpha]``."""
        if not text or text.lower() == "none":
            return cls("NONE")
        method, _, arg = text.partition(":")
        method = method.upper()
        if method == "THRESHOLD":
            return cls(method, threshold=float(arg) if arg else 0.3)
        if method == "CI":
            return cls(method, ci_alpha=float(arg) if arg else 0.05)
        raise ValueError(f"unknown prune spec {text!r}")


def _check_dag(g):
    A = np.asarray(g) != 0
    if not is_acyclic(A):
        raise CyclicGraphError("pruning requires an acyclic graph")
    return A


def estimate_weights(data, g) -> np.ndarray:
    """Per-node OLS coefficients (intercept fitted, then dropped) on the parents in ``g``."""
    A = _check_dag(g)
    x = data.x if hasattr(data, "x") else np.asarray(data, dtype=np.float64)
    xc = x - x.mean(axis=0)
    W = np.zeros(A.shape)
    for j in range(A.shape[0]):
        pa = np.flatnonzero(A[:, j])
        if pa.size:
            W[pa, j] = np.linalg.lstsq(xc[:, pa], xc[:, j], rcond=None)[0]
    return W


def prune_threshold(w, threshold: float = 0.3) -> np.ndarray:
    """Keep edges with ``|w| >= threshold``."""
    W = np.asarray(w, dtype=np.float64)
    return ((W != 0) & (np.abs(W) >= threshold)).astype(np.uint8)


def partial_correlation(x, i: int, j: int, cond) -> float:
    """Sample partial correlation of columns ``i`` and ``j`` given ``cond``."""
    cols = [i, j, *cond]
    C = np.corrcoef(x[:, cols], rowvar=False)
    C = np.atleast_2d(C)
    if len(cols) == 2:
        return float(C[0, 1])
    P = np.linalg.pinv(C)
    return float(-P[0, 1] / math.sqrt(P[0, 0] * P[1, 1]))


def fisher_z_pvalue(r: float, n: int, n_cond: int) -> float:
    """Two-sided p-value of ``z = 0.5 sqrt(n - |cond| - 3) ln((1 + r) / (1 - r))``.

    Returns 0 (dependent) when ``|r| >= 1``.
    """
    if not np.isfinite(r) or abs(r) >= 1:
        return 0.0
    dof = n - n_cond - 3
    if dof <= 0:
        return 0.0
    z = 0.5 * math.sqrt(dof) * math.log((1 + r) / (1 - r))
    return float(2 * norm.sf(abs(z)))


def prune_ci(data, g, alpha: float = 0.05) -> np.ndarray:
    """Drop ``j -> i`` when ``X_i`` and ``X_j`` look independent given the other parents of ``i``.

    Each node's parents are tested against the original parent set, so the
    result does not depend on test order.
    """
    A = _check_dag(g)
    x = data.x if hasattr(data, "x") else np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    out = A.astype(np.uint8).copy()
    for i in range(A.shape[0]):
        parents = np.flatnonzero(A[:, i]).tolist()
        for j in parents:
            cond = [p for p in parents if p != j]
            r = partial_correlation(x, i, j, cond)
            if fisher_z_pvalue(r, n, len(cond)) > alpha:
                out[j, i] = 0
    return out


def prune(data, g, cfg: PruneConfig) -> np.ndarray:
    if cfg.method == "NONE":
        return (np.asarray(g) != 0).astype(np.uint8)
    if cfg.method == "THRESHOLD":
        return prune_threshold(estimate_weights(data, g), cfg.threshold)
    return prune_ci(data, g, cfg.ci_alpha)
