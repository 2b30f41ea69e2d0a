"""Graph-recovery metrics, varsortability, and the sortnregress baseline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dag_core import transitive_closure

__all__ = ["EvalResult", "evaluate", "shd", "varsortability", "sortnregress"]


@dataclass(frozen=True)
class EvalResult:
    shd: int
    fdr: float | None
    tpr: float | None
    skeleton_precision: float | None
    skeleton_recall: float | None
    skeleton_f1: float | None
    predicted: int
    correct: int
    reversed: int
    extra: int
    missing: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _ratio(num, den):
    return None if den == 0 else num / den


def evaluate(predicted, truth) -> EvalResult:
    """Compare a predicted DAG to the true DAG.

    A reversed edge counts once toward SHD. FDR counts reversed and extra
    edges as false discoveries; it is ``None`` when nothing is predicted.
    """
    P = np.asarray(predicted) != 0
    T = np.asarray(truth) != 0
    if P.shape != T.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {T.shape}")
    P_skel = P | P.T
    T_skel = T | T.T
    n_pred = int(P.sum())
    correct = int((P & T).sum())
    reversed_ = int((P & ~T & T.T).sum())
    extra = int((P & ~T_skel).sum())
    missing = int((T & ~P_skel).sum())
    # Pairs, not ordered entries, for the skeleton.
    iu = np.triu_indices(P.shape[0], 1)
    ps, ts = P_skel[iu], T_skel[iu]
    tp_skel = int((ps & ts).sum())
    prec = _ratio(tp_skel, int(ps.sum()))
    rec = _ratio(tp_skel, int(ts.sum()))
    if prec is None or rec is None:
        f1 = None
    elif prec + rec == 0:
        f1 = 0.0
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return EvalResult(
        shd=missing + extra + reversed_,
        fdr=_ratio(reversed_ + extra, n_pred),
        tpr=_ratio(correct, int(T.sum())),
        skeleton_precision=prec,
        skeleton_recall=rec,
        skeleton_f1=f1,
        predicted=n_pred,
        correct=correct,
        reversed=reversed_,
        extra=extra,
        missing=missing,
    )


def shd(predicted, truth) -> int:
    return evaluate(predicted, truth).shd


def varsortability(truth, data, tol: float = 0.0) -> float | None:
    """Fraction of path-connected ordered pairs ``i ~> j`` with ``Var(X_j) > Var(X_i)``.

    Equal variances (within ``tol``) score one half. ``None`` when the graph
    has no directed path.
    """
    x = data.x if hasattr(data, "x") else np.asarray(data)
    R = transitive_closure(np.asarray(truth) != 0)
    if not R.any():
        return None
    var = x.var(axis=0)
    src, dst = np.nonzero(R)
    diff = var[dst] - var[src]
    up = (diff > tol).sum()
    tie = (np.abs(diff) <= tol).sum()
    return float((up + 0.5 * tie) / src.size)


def sortnregress(data, direction: str = "increasing", threshold: float = 0.3) -> np.ndarray:
    """Order nodes by marginal variance, regress each on all predecessors, threshold |coef|."""
    x = data.x if hasattr(data, "x") else np.asarray(data)
    d = x.shape[1]
    if direction not in ("increasing", "decreasing"):
        raise ValueError("direction must be 'increasing' or 'decreasing'")
    order = np.argsort(x.var(axis=0), kind="stable")
    if direction == "decreasing":
        order = order[::-1]
    xc = x - x.mean(axis=0)
    A = np.zeros((d, d), dtype=np.uint8)
    for pos in range(1, d):
        j = order[pos]
        pred = order[:pos]
        coef = np.linalg.lstsq(xc[:, pred], xc[:, j], rcond=None)[0]
        A[pred[np.abs(coef) >= threshold], j] = 1
    return A
