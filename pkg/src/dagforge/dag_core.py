"""Unconstrained DAG parameterization (Vec2DAG) and basic DAG utilities.

A potential vector ``z`` of length ``d(d+1)/2`` holds node potentials ``p``
(first ``d`` entries) and the strictly upper triangle of the edge-potential
matrix ``E`` (remaining entries, row-major: (0,1), (0,2), ..., (0,d-1),
(1,2), ...). The graph has an edge ``i -> j`` iff ``E[i,j] + E[j,i] > 0`` and
``p[j] > p[i]``. Ties and zeros never create edges.

Saved vectors use this row-major layout. Vectors laid out column-major by
other tools decode to different graphs.

Adjacency matrices are ``(d, d)`` arrays with ``A[i, j] = 1`` iff ``i -> j``.
Indices are 0-based.
"""

from __future__ import annotations

import csv
import itertools
import math
from pathlib import Path

import numpy as np

from . import kernels

__all__ = [
    "num_params",
    "num_nodes",
    "node_potentials",
    "edge_potentials",
    "vec_to_dag",
    "vec_to_dag_batch",
    "dag_to_vec",
    "is_acyclic",
    "enumerate_dags",
    "ancestors",
    "transitive_closure",
    "topological_order",
    "read_adjacency_csv",
    "write_adjacency_csv",
    "CyclicGraphError",
    "MatrixFormatError",
]


class CyclicGraphError(ValueError):
    """Raised when an operation that needs a DAG receives a cyclic graph."""


class MatrixFormatError(ValueError):
    """Raised for malformed adjacency CSV files."""


def num_params(d: int) -> int:
    """Length of a potential vector for ``d`` nodes."""
    return d * (d + 1) // 2


def num_nodes(length: int) -> int:
    """Invert :func:`num_params`; raises if ``length`` is not triangular."""
    d = int((math.isqrt(8 * length + 1) - 1) // 2)
    if d < 1 or num_params(d) != length:
        raise ValueError(f"length {length} is not d(d+1)/2 for any d >= 1")
    return d


def _as_vec(z) -> tuple[np.ndarray, int]:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("potential vector must be one-dimensional")
    if not np.all(np.isfinite(z)):
        raise ValueError("potential vector has non-finite entries")
    return z, num_nodes(z.shape[0])


def node_potentials(z) -> np.ndarray:
    z, d = _as_vec(z)
    return z[:d].copy()


def edge_potentials(z) -> np.ndarray:
    """Strictly upper-triangular ``(d, d)`` edge-potential matrix of ``z``."""
    z, d = _as_vec(z)
    E = np.zeros((d, d))
    E[np.triu_indices(d, 1)] = z[d:]
    return E


def vec_to_dag(z) -> np.ndarray:
    """Decode one potential vector into a ``(d, d)`` uint8 adjacency matrix."""
    z, d = _as_vec(z)
    return kernels.vec_to_dag_batch(z[None, :], d)[0]


def vec_to_dag_batch(Z, d: int) -> np.ndarray:
    """Decode a ``(B, d(d+1)/2)`` batch into ``(B, d, d)`` adjacencies."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != num_params(d):
        raise ValueError(f"expected shape (B, {num_params(d)}), got {Z.shape}")
    return kernels.vec_to_dag_batch(Z, d)


def is_acyclic(adjacency) -> bool:
    A = np.asarray(adjacency)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(np.diag(A) != 0):
        return False
    return bool(kernels.is_acyclic(A))


def transitive_closure(adjacency) -> np.ndarray:
    """Boolean reachability matrix: ``R[i, j]`` iff a directed path ``i ~> j`` exists."""
    A = np.asarray(adjacency) != 0
    R = A.copy()
    for k in range(A.shape[0]):
        R |= R[:, k : k + 1] & R[k : k + 1, :]
    return R


def ancestors(adjacency) -> list[set[int]]:
    R = transitive_closure(adjacency)
    return [set(np.flatnonzero(R[:, i]).tolist()) for i in range(R.shape[0])]


def topological_order(adjacency) -> list[int]:
    A = np.asarray(adjacency) != 0
    d = A.shape[0]
    indeg = A.sum(axis=0).astype(int)
    ready = sorted(j for j in range(d) if indeg[j] == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in np.flatnonzero(A[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
        ready.sort()
    if len(order) != d:
        raise CyclicGraphError("graph has a cycle")
    return order


def dag_to_vec(adjacency, epsilon: float = 1.0) -> np.ndarray:
    """Construct a potential vector that decodes exactly to ``adjacency``.

    Node potentials are ancestor counts rescaled into ``[-eps/2, eps/2]``;
    connected pairs get edge potential ``+eps/2`` and all others ``-eps/2``.
    When every node has the same number of ancestors (e.g. the empty graph),
    all node potentials are set to ``-eps/2``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    A = np.asarray(adjacency) != 0
    if not is_acyclic(A):
        raise CyclicGraphError("dag_to_vec requires an acyclic graph")
    d = A.shape[0]
    n_anc = transitive_closure(A).sum(axis=0).astype(np.float64)
    lo, hi = n_anc.min(), n_anc.max()
    if hi == lo:
        p = np.full(d, -0.5 * epsilon)
    else:
        p = (n_anc - lo) / (hi - lo) * epsilon - 0.5 * epsilon
    rows, cols = np.triu_indices(d, 1)
    connected = A[rows, cols] | A[cols, rows]
    e = np.where(connected, 0.5 * epsilon, -0.5 * epsilon)
    return np.concatenate([p, e])


_ENUM_CACHE: dict[int, list[np.ndarray]] = {}


def enumerate_dags(d: int) -> list[np.ndarray]:
    """All labeled DAGs on ``d <= 4`` nodes by brute force over directed graphs."""
    if d < 1:
        raise ValueError("d must be positive")
    if d > 4:
        raise ValueError("enumeration is limited to d <= 4")
    if d not in _ENUM_CACHE:
        slots = [(i, j) for i in range(d) for j in range(d) if i != j]
        out = []
        for bits in itertools.product((0, 1), repeat=len(slots)):
            A = np.zeros((d, d), dtype=np.uint8)
            for (i, j), b in zip(slots, bits):
                A[i, j] = b
            if kernels.is_acyclic(A):
                out.append(A)
        _ENUM_CACHE[d] = out
    return [A.copy() for A in _ENUM_CACHE[d]]


def write_adjacency_csv(path, adjacency) -> None:
    A = np.asarray(adjacency).astype(int)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in A:
            fh.write(",".join(str(v) for v in row) + "\n")


def read_adjacency_csv(path) -> np.ndarray:
    """Read a headerless 0/1 square matrix; errors carry the 1-based line number."""
    rows = []
    with open(Path(path), encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [int(float(c)) for c in row]
            except ValueError:
                raise MatrixFormatError(f"{path}: line {lineno}: non-numeric entry") from None
            if any(v not in (0, 1) for v in vals):
                raise MatrixFormatError(f"{path}: line {lineno}: entries must be 0 or 1")
            if rows and len(vals) != len(rows[0]):
                raise MatrixFormatError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise MatrixFormatError(f"{path}: empty matrix")
    A = np.array(rows, dtype=np.uint8)
    if A.shape[0] != A.shape[1]:
        raise MatrixFormatError(f"{path}: matrix is {A.shape[0]}x{A.shape[1]}, not square")
    return A
