"""Pure numpy implementation of the sign-randomization kernels."""

from __future__ import annotations

import numpy as np


def sweep_counts(flips, cluster_of, r, start, order, stops, thresholds):
    """Count sign changes whose imbalance reaches each threshold along a sweep.

    The sign vector starts at ``start``. Before evaluation point ``t`` the
    first ``stops[t]`` entries of ``order`` are switched from -1 to +1.
    At each stop, returns how many rows ``g`` of ``flips`` satisfy
    ``sum_k |sum_{j in k} g_j s_j| >= thresholds[t]``.
    """
    flips = np.asarray(flips, dtype=np.int8)
    cluster_of = np.asarray(cluster_of, dtype=np.intp)
    order = np.asarray(order, dtype=np.intp)
    stops = np.asarray(stops, dtype=np.intp)
    if stops.size and stops[-1] > order.size:
        raise ValueError("stop beyond the end of the sweep order")
    q = flips.shape[1]
    indicator = np.zeros((q, r), dtype=np.int32)
    indicator[np.arange(q), cluster_of] = 1
    f32 = flips.astype(np.int32)
    sums = (f32 * np.asarray(start, dtype=np.int32)) @ indicator
    counts = np.zeros(stops.size, dtype=np.int64)
    pos = 0
    for t, stop in enumerate(stops):
        if stop > pos:
            js = order[pos:stop]
            sums += 2 * (f32[:, js] @ indicator[js])
            pos = stop
        counts[t] = np.count_nonzero(np.abs(sums).sum(axis=1) >= thresholds[t])
    return counts
