"""Backend selection for the randomization kernels.

The compiled extension is used when it imports; set
``CLUSTERLEVEL_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("CLUSTERLEVEL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def _validate(flips, cluster_of, r, start, order, stops, thresholds):
    q = flips.shape[1] if flips.ndim == 2 else -1
    if flips.ndim != 2 or flips.shape[0] < 1:
        raise ValueError("flips must be a non-empty 2-d array")
    if cluster_of.shape != (q,) or start.shape != (q,):
        raise ValueError("cluster_of and start must have one entry per flip column")
    if q and (cluster_of.min() < 0 or cluster_of.max() >= r):
        raise ValueError("cluster index out of range")
    if order.size and (order.min() < 0 or order.max() >= q):
        raise ValueError("sweep order index out of range")
    if stops.shape != thresholds.shape or stops.ndim != 1:
        raise ValueError("stops and thresholds must be 1-d and of equal length")
    if stops.size and (stops[0] < 0 or np.any(np.diff(stops) < 0) or stops[-1] > order.size):
        raise ValueError("stops must be non-decreasing within [0, len(order)]")


def sweep_counts(flips, cluster_of, r, start, order, stops, thresholds, backend=None):
    """Sign changes whose imbalance reaches each threshold along a sweep.

    See :func:`clusterlevel._pykernels.sweep_counts` for the contract.
    ``backend`` forces ``"python"`` or ``"cython"``; ``None`` uses
    :data:`BACKEND`.
    """
    impl = {None: _impl, "python": _pykernels}.get(backend)
    if impl is None:
        if backend != "cython" or BACKEND != "cython":
            raise ValueError(f"backend {backend!r} is not available")
        impl = _impl
    args = (
        np.ascontiguousarray(flips, dtype=np.int8),
        np.ascontiguousarray(cluster_of, dtype=np.intp),
        int(r),
        np.ascontiguousarray(start, dtype=np.int8),
        np.ascontiguousarray(order, dtype=np.intp),
        np.ascontiguousarray(stops, dtype=np.intp),
        np.ascontiguousarray(thresholds, dtype=np.int64),
    )
    _validate(*args)
    return impl.sweep_counts(*args)
