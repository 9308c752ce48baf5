"""Worst-case randomization (WCR) test for the level of clustering.

The feasible test takes the supremum over ``lam`` of the randomization
p-value of the signs of ``N_j + lam * D_j``. Those signs change only where
``lam`` crosses ``-R_j = -N_j / D_j``, so the search runs over cutoffs in
the descending order of the ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import kernels
from .data import ClusterLayout, Dataset, build_layout
from .randomization import (
    FULL_ENUMERATION_MAX,
    SignGroup,
    make_sign_group,
    sign_pattern,
)
from .regression import (
    SubclusterScores,
    compute_score_components,
    estimate_pi,
    ols_fit,
)


class DegenerateInstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Cutoff:
    m: int
    signs: np.ndarray
    p_value: float
    statistic: float


@dataclass(frozen=True, eq=False)
class WcrResult:
    p_value: float
    reject: bool
    alpha: float
    per_cutoff: list[Cutoff]
    ratios: np.ndarray
    zero_set: tuple[str, ...]
    group_mode: str
    B: int
    seed: int | None
    R_plus: float
    R_minus: float
    pruned: bool
    subclusters: tuple[str, ...] = field(default=(), repr=False)

    @property
    def worst(self) -> Cutoff:
        return max(self.per_cutoff, key=lambda c: c.p_value)

    @property
    def statistic(self) -> float:
        return self.worst.statistic


def compute_ratios(scores: SubclusterScores) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(R, zero_mask)``; ``R_j = 0`` on the zero-denominator mask."""
    zero = scores.denominator <= 0.0
    if np.all(zero):
        raise DegenerateInstanceError(
            "the residualized regressor is zero in every sub-cluster; no signal to test"
        )
    ratios = np.zeros_like(scores.numerator)
    ratios[~zero] = scores.numerator[~zero] / scores.denominator[~zero]
    return ratios, zero


def conservative_medians(
    ratios: np.ndarray,
    layout: ClusterLayout,
    zero_set: np.ndarray | None = None,
) -> tuple[float, float]:
    """Upper median maximised over clusters and lower median minimised over clusters.

    The upper median of a cluster is the smallest ratio that is ``>=`` a
    strict majority of that cluster's ratios; the lower median mirrors it.
    Zero-denominator sub-clusters are left out.
    """
    ratios = np.asarray(ratios, dtype=float)
    active = np.ones(ratios.shape[0], dtype=bool) if zero_set is None else ~np.asarray(zero_set)
    upper, lower = [], []
    for k in range(layout.r):
        vals = np.sort(ratios[(layout.subcluster_cluster == k) & active])
        m = vals.shape[0]
        if m == 0:
            continue
        upper.append(vals[m // 2])
        lower.append(vals[(m - 1) // 2])
    if not upper:
        raise DegenerateInstanceError("no sub-cluster with a non-zero denominator")
    return float(max(upper)), float(min(lower))


def _sweep_order(ratios: np.ndarray, zero: np.ndarray) -> np.ndarray:
    active = np.flatnonzero(~zero)
    return active[np.argsort(-ratios[active], kind="stable")]


def _boundaries(sorted_vals: np.ndarray) -> np.ndarray:
    """Cutoff counts ``m`` (number of +1 signs) that do not split tied ratios."""
    n = sorted_vals.shape[0]
    m = np.arange(1, n + 1)
    keep = np.ones(n, dtype=bool)
    keep[:-1] = sorted_vals[:-1] > sorted_vals[1:]
    return m[keep]


def _signs_at(m: int, order: np.ndarray, zero: np.ndarray) -> np.ndarray:
    s = np.where(zero, 0, -1).astype(np.int8)
    s[order[:m]] = 1
    return s


def _sweep_imbalances(start: np.ndarray, cluster_of: np.ndarray, r: int, order: np.ndarray) -> np.ndarray:
    """``r * T`` of the sign vector after each prefix of ``order`` is switched to +1."""
    per = np.zeros((order.shape[0] + 1, r), dtype=np.int64)
    per[0] = np.bincount(cluster_of, weights=start.astype(np.int64), minlength=r).astype(np.int64)
    steps = np.zeros((order.shape[0], r), dtype=np.int64)
    steps[np.arange(order.shape[0]), cluster_of[order]] = 2
    per[1:] = per[0] + np.cumsum(steps, axis=0)
    return np.abs(per).sum(axis=1)


def candidate_cutoffs(
    ratios: np.ndarray,
    zero_set: np.ndarray,
    R_plus: float | None,
    R_minus: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sweep order and candidate cutoff counts.

    With ``R_plus``/``R_minus`` given, only cutoffs whose smallest positive
    ratio lies in ``[R_minus, R_plus]`` are kept. With both ``None`` every
    tie-respecting cutoff, including the all-negative one (``m = 0``), is
    returned.
    """
    zero = np.asarray(zero_set, dtype=bool)
    order = _sweep_order(ratios, zero)
    vals = ratios[order]
    ms = _boundaries(vals)
    if R_plus is None and R_minus is None:
        return order, np.concatenate([[0], ms])
    last = vals[ms - 1]
    keep = (last >= R_minus) & (last <= R_plus)
    return order, ms[keep]


def candidate_sign_vectors(
    ratios: np.ndarray,
    zero_set: np.ndarray,
    R_plus: float,
    R_minus: float,
    layout: ClusterLayout | None = None,
) -> list[np.ndarray]:
    zero = np.asarray(zero_set, dtype=bool)
    order, ms = candidate_cutoffs(ratios, zero, R_plus, R_minus)
    return [_signs_at(int(m), order, zero) for m in ms]


def wcr_from_scores(
    scores: SubclusterScores,
    layout: ClusterLayout,
    group: SignGroup,
    alpha: float = 0.05,
    prune: bool | None = None,
) -> WcrResult:
    """Worst-case p-value from precomputed score components.

    ``prune=None`` applies the conservative-median window only under full
    enumeration, where it provably leaves the supremum unchanged; with a
    stochastic group every cutoff is evaluated.
    """
    if group.q != layout.q:
        raise ValueError("sign group built for a different number of sub-clusters")
    ratios, zero = compute_ratios(scores)
    r_plus, r_minus = conservative_medians(ratios, layout, zero)
    if prune is None:
        prune = group.mode == "full"
    if prune:
        order, ms = candidate_cutoffs(ratios, zero, r_plus, r_minus)
    else:
        order, ms = candidate_cutoffs(ratios, zero, None, None)

    cluster_of = layout.subcluster_cluster
    start = np.where(zero, 0, -1).astype(np.int8)
    signs = [_signs_at(int(m), order, zero) for m in ms]
    thresholds = _sweep_imbalances(start, cluster_of, layout.r, order)[ms]
    counts = kernels.sweep_counts(group.flips, cluster_of, layout.r, start, order, ms, thresholds)
    pvals = counts / len(group)
    per_cutoff = [
        Cutoff(int(m), s, float(p), float(t) / layout.r)
        for m, s, p, t in zip(ms, signs, pvals, thresholds)
    ]
    p_value = float(pvals.max())
    return WcrResult(
        p_value=p_value,
        reject=p_value <= alpha,
        alpha=alpha,
        per_cutoff=per_cutoff,
        ratios=ratios,
        zero_set=tuple(layout.subclusters[j] for j in np.flatnonzero(zero)),
        group_mode=group.mode,
        B=len(group),
        seed=group.seed,
        R_plus=r_plus,
        R_minus=r_minus,
        pruned=bool(prune),
        subclusters=layout.subclusters,
    )


def prepare_scores(
    ds: Dataset,
    layout: ClusterLayout | None = None,
    pi_mode: Literal["subcluster", "pooled"] = "subcluster",
) -> tuple[ClusterLayout, SubclusterScores]:
    layout = build_layout(ds) if layout is None else layout
    fit = ols_fit(ds)
    pi = estimate_pi(ds, layout, pi_mode)
    return layout, compute_score_components(ds, layout, fit, pi)


def wcr_test(
    ds: Dataset,
    alpha: float = 0.05,
    B: int = 1000,
    seed: int | None = None,
    *,
    full_max: int = FULL_ENUMERATION_MAX,
    prune: bool | None = None,
    pi_mode: Literal["subcluster", "pooled"] = "subcluster",
) -> WcrResult:
    layout, scores = prepare_scores(ds, pi_mode=pi_mode)
    if layout.q < 2:
        raise DegenerateInstanceError("the test needs at least two sub-clusters")
    group = make_sign_group(layout.q, B, seed, full_max)
    return wcr_from_scores(scores, layout, group, alpha, prune)


def _brute_pvalue(s: np.ndarray, flips: np.ndarray, cluster_of: np.ndarray, r: int) -> float:
    indicator = np.zeros((flips.shape[1], r), dtype=np.int64)
    indicator[np.arange(flips.shape[1]), cluster_of] = 1
    t_obs = np.abs(s.astype(np.int64) @ indicator).sum()
    t_all = np.abs((flips.astype(np.int64) * s) @ indicator).sum(axis=1)
    return float(np.mean(t_all >= t_obs))


def sup_pvalue_oracle(
    ds: Dataset,
    alpha: float = 0.05,
    B: int = 1000,
    seed: int | None = None,
    grid_padding: float = 10.0,
    *,
    full_max: int = FULL_ENUMERATION_MAX,
    pi_mode: Literal["subcluster", "pooled"] = "subcluster",
) -> float:
    """Brute-force supremum of the p-value over a grid of ``lam`` values.

    The grid holds every midpoint between consecutive distinct ``-R_j`` and
    the two endpoints ``+-grid_padding * max|R|``. Signs come straight from
    ``N_j + lam * D_j``; no sorting, pruning or incremental sweep is used.
    """
    layout, scores = prepare_scores(ds, pi_mode=pi_mode)
    group = make_sign_group(layout.q, B, seed, full_max)
    zero = scores.denominator <= 0.0
    if np.all(zero):
        raise DegenerateInstanceError("no sub-cluster with a non-zero denominator")
    ratios = scores.numerator[~zero] / scores.denominator[~zero]
    pts = np.unique(-ratios)
    span = grid_padding * max(float(np.abs(ratios).max()), 1.0)
    grid = np.concatenate([[-span], (pts[:-1] + pts[1:]) / 2, [span]])
    best = 0.0
    for lam in grid:
        s = sign_pattern(scores.numerator + lam * scores.denominator, zero)
        best = max(best, _brute_pvalue(s, group.flips, layout.subcluster_cluster, layout.r))
    return best
