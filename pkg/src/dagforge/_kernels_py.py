"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. Every function
here has an identically named, identically behaving counterpart in
``_kernels.pyx``.
"""

import numpy as np

_TRIU_CACHE = {}


def _triu(d):
    idx = _TRIU_CACHE.get(d)
    if idx is None:
        idx = np.triu_indices(d, 1)
        _TRIU_CACHE[d] = idx
    return idx


def vec_to_dag_batch(Z, d):
    """Map a (B, d(d+1)/2) batch of potential vectors to (B, d, d) uint8 adjacencies."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    B = Z.shape[0]
    p = Z[:, :d]
    rows, cols = _triu(d)
    connected = np.zeros((B, d, d), dtype=bool)
    # E + E^T at (i, j) and (j, i) both equal the single stored entry.
    pos = Z[:, d:] > 0
    connected[:, rows, cols] = pos
    connected[:, cols, rows] = pos
    order = p[:, :, None] < p[:, None, :]
    return (connected & order).astype(np.uint8)


def parent_masks_batch(Z, d):
    """Per-node parent bitmasks and edge counts for a batch of potential vectors.

    Returns ``(masks, n_edges)`` with ``masks[b, j]`` having bit ``i`` set iff
    ``i -> j`` in the DAG of ``Z[b]``. Requires ``d <= 64``.
    """
    if d > 64:
        raise ValueError("parent bitmasks require d <= 64")
    A = vec_to_dag_batch(Z, d)
    weights = np.left_shift(np.uint64(1), np.arange(d, dtype=np.uint64))
    masks = (A.astype(np.uint64) * weights[None, :, None]).sum(axis=1, dtype=np.uint64)
    n_edges = A.reshape(A.shape[0], -1).sum(axis=1, dtype=np.int64)
    return masks, n_edges


def is_acyclic(A):
    """Kahn elimination on a square 0/1 matrix."""
    A = np.asarray(A) != 0
    d = A.shape[0]
    indeg = A.sum(axis=0).astype(np.int64)
    stack = [j for j in range(d) if indeg[j] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in np.flatnonzero(A[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    return seen == d
