"""Sign-change group, the net-sign-imbalance statistic and randomization p-values.

Sign vectors are ``int8`` arrays over sub-clusters in layout order with
entries in {-1, 0, +1}. A 0 marks a sub-cluster whose residualized regressor
is identically zero; it contributes nothing to the statistic under any flip.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from . import kernels
from .data import ClusterLayout

FULL_ENUMERATION_MAX = 10


@dataclass(frozen=True, eq=False)
class SignGroup:
    """Rows of ``flips`` are the sign changes; row 0 is always the identity."""

    flips: np.ndarray
    mode: Literal["full", "stochastic"]
    B: int
    seed: int | None = None

    def __len__(self) -> int:
        return self.flips.shape[0]

    @property
    def q(self) -> int:
        return self.flips.shape[1]


def make_sign_group(
    q: int,
    B: int = 1000,
    seed: int | np.random.SeedSequence | None = None,
    full_max: int = FULL_ENUMERATION_MAX,
) -> SignGroup:
    """All ``2**q`` sign changes when ``q <= full_max``, else ``B`` random ones."""
    if q < 1:
        raise ValueError("need at least one sub-cluster")
    if B < 1:
        raise ValueError("need at least one draw")
    if q <= full_max:
        codes = np.arange(2**q, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(q)) & 1
        flips = (1 - 2 * bits).astype(np.int8)
        mode = "full"
    else:
        rng = np.random.default_rng(seed)
        flips = np.empty((B, q), dtype=np.int8)
        flips[0] = 1
        flips[1:] = 2 * rng.integers(0, 2, size=(B - 1, q), dtype=np.int8) - 1
        mode = "stochastic"
    flips.setflags(write=False)
    seed_out = seed if isinstance(seed, (int, np.integer)) else None
    return SignGroup(flips, mode, flips.shape[0], seed_out)


def sign_pattern(values: np.ndarray, zero: np.ndarray | None = None) -> np.ndarray:
    """+1 where ``values >= 0``, -1 elsewhere, 0 on the ``zero`` mask."""
    s = np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)
    if zero is not None:
        s[np.asarray(zero, dtype=bool)] = 0
    return s


def imbalance(s: np.ndarray, cluster_of: np.ndarray, r: int) -> int:
    """``r * T(s)``: the sum over clusters of |net number of positive signs|."""
    per_cluster = np.bincount(cluster_of, weights=np.asarray(s, dtype=np.int64), minlength=r)
    return int(np.abs(per_cluster).sum().round())


def test_statistic_T(s: np.ndarray, layout: ClusterLayout) -> Fraction:
    return Fraction(imbalance(s, layout.subcluster_cluster, layout.r), layout.r)


test_statistic_T.__test__ = False  # keep pytest from collecting it


def randomization_count(s: np.ndarray, layout: ClusterLayout, group: SignGroup) -> int:
    if group.q != layout.q or len(s) != layout.q:
        raise ValueError("sign vector, group and layout disagree on the number of sub-clusters")
    thr = imbalance(s, layout.subcluster_cluster, layout.r)
    counts = kernels.sweep_counts(
        group.flips, layout.subcluster_cluster, layout.r,
        np.asarray(s, dtype=np.int8), np.empty(0, dtype=np.intp),
        np.zeros(1, dtype=np.intp), np.array([thr]),
    )
    return int(counts[0])


def randomization_pvalue(s: np.ndarray, layout: ClusterLayout, group: SignGroup) -> float:
    """Share of sign changes ``g`` with ``T(g * s) >= T(s)``."""
    return randomization_count(s, layout, group) / len(group)
