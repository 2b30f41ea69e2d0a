"""Decomposable graph scores (BIC-EV, BIC-NV, least squares) with a local-score cache.

Every score is a function of the per-node residual sums of squares ``SSR_i``
of regressing ``X_i`` on its parents, plus the edge count ``|G|``:

* ``BIC_EV``: ``-(n d ln(sum_i SSR_i / (n d)) + |G| ln n)``
* ``BIC_NV``: ``-(n sum_i ln(SSR_i / n) + |G| ln n)``
* ``LS``:     ``-(sum_i SSR_i + lambda0 |G|)``

The reward of a potential vector is the score of its decoded DAG divided by
``n * d``.
"""

from __future__ import annotations

import csv
import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .dag_core import num_nodes, vec_to_dag
from .gp_kernel import GpConfig, gp_ssr

__all__ = [
    "Dataset",
    "ScoreConfig",
    "ScoreCache",
    "NumericalError",
    "DataFormatError",
    "ssr",
    "score",
    "score_from_ssr",
    "reward",
    "batch_rewards",
    "load_csv",
    "save_csv",
]

SSR_FLOOR = 1e-12
KINDS = ("BIC_EV", "BIC_NV", "LS")
REGRESSORS = ("OLS", "GP")


class NumericalError(ArithmeticError):
    """Non-finite intermediate value, usually corrupt data or a diverging run."""


class DataFormatError(ValueError):
    """Malformed dataset file."""


@dataclass
class Dataset:
    """An ``n x d`` observation matrix plus optional generation metadata."""

    x: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("dataset must be a 2-D array")
        if self.x.shape[0] < 2 or self.x.shape[1] < 1:
            raise ValueError("dataset needs n >= 2 rows and d >= 1 columns")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def fingerprint(self) -> str:
        """SHA-256 of the raw float64 matrix (shape included)."""
        h = hashlib.sha256()
        h.update(np.asarray(self.x.shape, dtype=np.int64).tobytes())
        h.update(self.x.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ScoreConfig:
    kind: str = "BIC_EV"
    regressor: str = "OLS"
    lambda0: float = 0.0
    gp: GpConfig = field(default_factory=GpConfig)
    intercept: bool = True
    ssr_floor: float = SSR_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper().replace("-", "_"))
        object.__setattr__(self, "regressor", self.regressor.upper())
        if self.kind not in KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}; expected one of {KINDS}")
        if self.regressor not in REGRESSORS:
            raise ValueError(f"unknown regressor {self.regressor!r}; expected one of {REGRESSORS}")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")


class ScoreCache:
    """Memoized ``SSR`` values keyed by ``(node, parent bitmask)``.

    A cache belongs to one (dataset, score config) pair; the caller must not
    share it across datasets. Inserts are guarded by a lock; reads are not.
    With ``maxsize`` set, least recently inserted entries are evicted.
    """

    def __init__(self, maxsize: int | None = None, enabled: bool = True):
        self.maxsize = maxsize
        self.enabled = enabled
        self._data: OrderedDict[tuple[int, int], float] | dict[tuple[int, int], float]
        self._data = OrderedDict() if maxsize else {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def get(self, key):
        val = self._data.get(key)
        if val is None:
            self.misses += 1
        else:
            self.hits += 1
        return val

    def put(self, key, value: float) -> None:
        with self._lock:
            self._data[key] = value
            if self.maxsize and len(self._data) > self.maxsize:
                self._data.popitem(last=False)  # type: ignore[call-arg]


def _mask(parents) -> int:
    m = 0
    for i in parents:
        m |= 1 << int(i)
    return m


def _parents_of_mask(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _ols_ssr(x: np.ndarray, node: int, parents: list[int], intercept: bool) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        y = x[:, node]
        if intercept:
            y = y - y.mean()
        if not parents:
            return float(y @ y)
        P = x[:, parents]
        if intercept:
            P = P - P.mean(axis=0)
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(y))):
            return float("nan")
        coef = np.linalg.lstsq(P, y, rcond=None)[0]
        r = y - P @ coef
        return float(r @ r)


def ssr(data: Dataset, node: int, parents, regressor: str = "OLS", *, gp: GpConfig | None = None,
        intercept: bool = True) -> float:
    """Residual sum of squares of regressing column ``node`` on ``parents``.

    OLS fits include an intercept unless ``intercept=False``; rank-deficient
    designs get the minimum-norm least-squares solution.
    """
    parents = sorted(int(p) for p in parents)
    if node in parents:
        raise ValueError("a node cannot be its own parent")
    if regressor.upper() == "GP":
        val = gp_ssr(data, node, parents, gp)
    else:
        val = _ols_ssr(data.x, node, parents, intercept)
    if not np.isfinite(val):
        raise NumericalError(f"non-finite SSR for node {node}; data may be corrupt")
    return val


def _cached_ssr(data, node, mask, cfg, cache):
    if cache is not None and cache.enabled and data.d <= 64:
        key = (node, mask)
        val = cache.get(key)
        if val is None:
            val = ssr(data, node, _parents_of_mask(mask), cfg.regressor, gp=cfg.gp,
                      intercept=cfg.intercept)
            cache.put(key, val)
        return val
    return ssr(data, node, _parents_of_mask(mask), cfg.regressor, gp=cfg.gp,
               intercept=cfg.intercept)


def score_from_ssr(ssrs, n_edges, n: int, cfg: ScoreConfig):
    """Score(s) from per-node SSR values; ``ssrs`` is ``(d,)`` or ``(B, d)``."""
    ssrs = np.asarray(ssrs, dtype=np.float64)
    n_edges = np.asarray(n_edges, dtype=np.float64)
    d = ssrs.shape[-1]
    if cfg.kind == "LS":
        return -(ssrs.sum(axis=-1) + cfg.lambda0 * n_edges)
    floored = np.maximum(ssrs, cfg.ssr_floor)
    if cfg.kind == "BIC_EV":
        return -(n * d * np.log(floored.sum(axis=-1) / (n * d)) + n_edges * np.log(n))
    return -(n * np.log(floored / n).sum(axis=-1) + n_edges * np.log(n))


def score(data: Dataset, g, cfg: ScoreConfig | None = None, cache: ScoreCache | None = None) -> float:
    """Score of DAG adjacency ``g`` on ``data``."""
    cfg = cfg or ScoreConfig()
    A = np.asarray(g) != 0
    if A.shape != (data.d, data.d):
        raise ValueError(f"graph is {A.shape}, data has d={data.d}")
    ssrs = np.empty(data.d)
    for j in range(data.d):
        ssrs[j] = _cached_ssr(data, j, _mask(np.flatnonzero(A[:, j])), cfg, cache)
    s = float(score_from_ssr(ssrs, A.sum(), data.n, cfg))
    if not np.isfinite(s):
        raise NumericalError("non-finite score")
    return s


def reward(data: Dataset, z, cfg: ScoreConfig | None = None, cache: ScoreCache | None = None) -> float:
    """Score of ``vec_to_dag(z)`` scaled by ``1 / (n d)``."""
    return score(data, vec_to_dag(z), cfg, cache) / (data.n * data.d)


def batch_rewards(data: Dataset, Z, cfg: ScoreConfig, cache: ScoreCache | None = None):
    """Rewards for a ``(B, d(d+1)/2)`` batch of potential vectors.

    Returns ``(rewards, masks)``; ``masks`` is the ``(B, d)`` parent-bitmask
    array (``None`` when ``d > 64``) so callers can identify the DAGs.
    """
    Z = np.asarray(Z, dtype=np.float64)
    d = data.d
    if num_nodes(Z.shape[1]) != d:
        raise ValueError("potential vectors do not match the data dimension")
    B = Z.shape[0]
    if d > 64:
        r = np.array([reward(data, z, cfg, cache) for z in Z])
        return r, None
    masks, n_edges = kernels.parent_masks_batch(Z, d)
    ssrs = np.empty((B, d))
    for j in range(d):
        col = masks[:, j]
        uniq, inv = np.unique(col, return_inverse=True)
        vals = np.array([_cached_ssr(data, j, int(m), cfg, cache) for m in uniq])
        ssrs[:, j] = vals[inv]
    s = score_from_ssr(ssrs, n_edges, data.n, cfg)
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite reward")
    return s / (data.n * d), masks


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path) -> Dataset:
    """Read a comma-separated sample matrix; a non-numeric first row is taken as a header."""
    rows = []
    header = None
    with open(Path(path), encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row):
                header = [c.strip() for c in row]
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: non-numeric entry") from None
            if rows and len(vals) != len(rows[0]):
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(vals)}"
                )
            rows.append(vals)
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need at least two data rows")
    x = np.array(rows)
    if not np.all(np.isfinite(x)):
        raise DataFormatError(f"{path}: non-finite entries")
    meta = {"source": str(path)}
    if header:
        meta["columns"] = header
    return Dataset(x, meta)


def save_csv(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in data.x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
