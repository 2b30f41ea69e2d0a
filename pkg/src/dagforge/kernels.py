"""Backend selection for the hot kernels.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``DAGFORGE_PURE_PYTHON=1`` is set.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("DAGFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

vec_to_dag_batch = _impl.vec_to_dag_batch
parent_masks_batch = _impl.parent_masks_batch
is_acyclic = _impl.is_acyclic

__all__ = ["BACKEND", "vec_to_dag_batch", "parent_masks_batch", "is_acyclic"]
