"""Naive randomization, IM and MNW cluster-level tests, plus inference on beta.

The wild bootstraps never refit the regression per draw. With Rademacher
weights ``w`` on group residual blocks, bootstrap residuals are
``M_X (w * u)``, so every group's contribution to the beta-entry of the
sandwich is a fixed linear map of the weight vector. One ``G x G`` matrix
per dataset turns all draws into a single matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import stats

from .data import ClusterLayout, Dataset, build_layout
from .randomization import (
    FULL_ENUMERATION_MAX,
    make_sign_group,
    randomization_pvalue,
    sign_pattern,
    test_statistic_T,
)
from .regression import SingularityError, ols, ols_fit
from .wcr import DegenerateInstanceError, compute_ratios, prepare_scores

Grouping = Literal["cluster", "subcluster"]

ART_FULL_ENUMERATION_MAX = 14


class InfeasibleError(ValueError):
    """The test cannot be computed on this design (e.g. beta not estimable per group)."""


@dataclass(frozen=True, eq=False)
class TestResult:
    __test__ = False

    method: str
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    draws: int | None = None
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)


def _group_index(ds: Dataset, grouping: Grouping) -> np.ndarray:
    if grouping == "cluster":
        labels = ds.cluster_id
    elif grouping == "subcluster":
        labels = ds.subcluster_id
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    return np.unique(labels, return_inverse=True)[1]


def _rademacher(rng: np.random.Generator, B: int, G: int) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=(B, G)) - 1).astype(float)


def _beta_influence(design: np.ndarray, xtx_inverse: np.ndarray) -> np.ndarray:
    """Row ``i`` weight on the beta coefficient: ``M_i' (M'M)^{-1} e_1``."""
    return design @ xtx_inverse[:, 0]


def _group_sums(values: np.ndarray, groups: np.ndarray, G: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(groups, weights=values, minlength=G)
    out = np.zeros((G, values.shape[1]))
    np.add.at(out, groups, values)
    return out


def _score_map(design, xtx_inverse, h, resid, groups, G):
    """Matrix ``Q`` with ``Q @ w`` = per-group beta scores of the bootstrap residuals."""
    e = _group_sums(h * resid, groups, G)
    H = _group_sums(h[:, None] * design, groups, G)
    C = _group_sums(design * resid[:, None], groups, G)
    return np.diag(e) - H @ xtx_inverse @ C.T, e


# --------------------------------------------------------------------------
# tests for the level of clustering


def nr_test(
    ds: Dataset,
    alpha: float = 0.05,
    B: int = 1000,
    seed: int | None = None,
    *,
    full_max: int = FULL_ENUMERATION_MAX,
) -> TestResult:
    """Randomization test on the signs of the estimated scores, ignoring estimation error."""
    layout, scores = prepare_scores(ds)
    if layout.q < 2:
        raise DegenerateInstanceError("the test needs at least two sub-clusters")
    return nr_from_scores(scores, layout, make_sign_group(layout.q, B, seed, full_max), alpha)


def nr_from_scores(scores, layout: ClusterLayout, group, alpha: float = 0.05) -> TestResult:
    _, zero = compute_ratios(scores)
    s = sign_pattern(scores.numerator, zero)
    p = randomization_pvalue(s, layout, group)
    return TestResult(
        method="nr",
        statistic=float(test_statistic_T(s, layout)),
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        draws=len(group),
        seed=group.seed,
        diagnostics={"group_mode": group.mode, "signs": s.tolist()},
    )


def im_test(
    ds: Dataset,
    alpha: float = 0.05,
    draws: int = 1000,
    seed: int | None = None,
) -> TestResult:
    """Compare the dispersion of per-cluster estimates with its null reference.

    Each cluster's estimate gets a sub-cluster-level sandwich variance; the
    reference distribution draws independent normals with those variances
    and recomputes the sample variance across clusters.
    """
    layout = build_layout(ds)
    if layout.r < 2:
        raise InfeasibleError("the IM test needs at least two clusters")
    design = ds.design
    betas = np.empty(layout.r)
    omegas = np.empty(layout.r)
    for k in range(layout.r):
        rows = np.flatnonzero(layout.obs_cluster == k)
        try:
            coef, resid, xtx_inv = ols(design[rows], ds.y[rows])
        except SingularityError as exc:
            raise InfeasibleError(
                f"beta is not estimable within cluster {layout.clusters[k]!r}: {exc}"
            ) from None
        h = _beta_influence(design[rows], xtx_inv)
        sub = np.unique(layout.obs_subcluster[rows], return_inverse=True)[1]
        betas[k] = coef[0]
        omegas[k] = float(np.sum(_group_sums(h * resid, sub, sub.max() + 1) ** 2))
    v_hat = float(np.var(betas, ddof=1))
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal((draws, layout.r)) * np.sqrt(omegas)
    v_ref = np.var(ref, axis=1, ddof=1)
    crit = float(np.quantile(v_ref, 1 - alpha))
    return TestResult(
        method="im",
        statistic=v_hat,
        p_value=float(np.mean(v_ref >= v_hat)),
        reject=v_hat > crit,
        alpha=alpha,
        draws=draws,
        seed=seed,
        diagnostics={
            "beta_k": betas.tolist(),
            "omega_k": omegas.tolist(),
            "critical_value": crit,
        },
    )


def mnw_statistic(
    design: np.ndarray,
    residuals: np.ndarray,
    xtx_inverse: np.ndarray,
    coarse: np.ndarray,
    fine: np.ndarray,
) -> float:
    """Beta-entry of the coarse-level sandwich minus that of the fine-level one."""
    h = _beta_influence(design, xtx_inverse) * residuals
    out = 0.0
    for sign, groups in ((1.0, coarse), (-1.0, fine)):
        idx = np.unique(groups, return_inverse=True)[1]
        out += sign * float(np.sum(np.bincount(idx, weights=h) ** 2))
    return out


def mnw_test(
    ds: Dataset,
    alpha: float = 0.05,
    B: int = 399,
    seed: int | None = None,
) -> TestResult:
    """Sandwich-difference test with a sub-cluster-level wild bootstrap reference.

    The statistic is not studentized: the bootstrap compares it against its
    own resampling distribution, where a common scale cancels.
    """
    if B < 1:
        raise ValueError("at least one bootstrap draw is required")
    layout = build_layout(ds)
    if layout.q < 2:
        raise DegenerateInstanceError("the test needs at least two sub-clusters")
    fit = ols_fit(ds)
    design = ds.design
    h = _beta_influence(design, fit.xtx_inverse)
    fine = layout.obs_subcluster
    Q, e = _score_map(design, fit.xtx_inverse, h, fit.residuals, fine, layout.q)
    indicator = np.zeros((layout.q, layout.r))
    indicator[np.arange(layout.q), layout.subcluster_cluster] = 1.0

    tau = float(np.sum((e @ indicator) ** 2) - np.sum(e**2))
    rng = np.random.default_rng(seed)
    S = _rademacher(rng, B, layout.q) @ Q.T
    tau_star = np.sum((S @ indicator) ** 2, axis=1) - np.sum(S**2, axis=1)
    exceed = int(np.count_nonzero(np.abs(tau_star) >= abs(tau)))
    p = (1 + exceed) / (B + 1)
    return TestResult(
        method="mnw",
        statistic=tau,
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        draws=B,
        seed=seed,
        diagnostics={"cce_cluster": float(np.sum((e @ indicator) ** 2)), "cce_subcluster": float(np.sum(e**2))},
    )


# --------------------------------------------------------------------------
# inference on beta under a chosen grouping


def cce_t_test(
    ds: Dataset,
    beta_null: float = 0.0,
    grouping: Grouping = "cluster",
    alpha: float = 0.05,
    df: Literal["residual", "groups"] = "residual",
) -> TestResult:
    """t-test with the raw cluster-robust standard error.

    ``df="residual"`` uses ``n - (d + 1)`` degrees of freedom, ``"groups"``
    uses ``G - 1``.
    """
    fit = ols_fit(ds)
    groups = _group_index(ds, grouping)
    G = int(groups.max()) + 1
    h = _beta_influence(ds.design, fit.xtx_inverse)
    var = float(np.sum(_group_sums(h * fit.residuals, groups, G) ** 2))
    diff = fit.beta_hat - beta_null
    if var > 0:
        t = diff / np.sqrt(var)
    else:
        t = 0.0 if diff == 0 else np.copysign(np.inf, diff)
    if df == "residual":
        dof = ds.n - ds.design.shape[1]
    elif df == "groups":
        dof = G - 1
    else:
        raise ValueError(f"unknown df rule {df!r}")
    if dof < 1:
        raise InfeasibleError("no degrees of freedom left for the t reference")
    p = float(min(1.0, 2 * stats.t.sf(abs(t), dof)))
    return TestResult(
        method=f"cce_{grouping}",
        statistic=float(t),
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        diagnostics={"se": float(np.sqrt(var)), "groups": G, "df": dof, "beta_hat": fit.beta_hat},
    )


def _studentized_means(d: np.ndarray) -> np.ndarray:
    G = d.shape[-1]
    mean = d.mean(axis=-1)
    sd = d.std(axis=-1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(G) * mean / sd
    return np.where(sd > 0, t, np.where(mean == 0, 0.0, np.copysign(np.inf, mean)))


def art_test(
    ds: Dataset,
    beta_null: float = 0.0,
    grouping: Grouping = "cluster",
    alpha: float = 0.05,
    B: int = 1000,
    seed: int | None = None,
    *,
    full_max: int = ART_FULL_ENUMERATION_MAX,
) -> TestResult:
    """Sign-flip randomization test on per-group estimates, no random tie-breaking."""
    groups = _group_index(ds, grouping)
    G = int(groups.max()) + 1
    if G < 2:
        raise InfeasibleError("the ART needs at least two groups")
    design = ds.design
    betas = np.empty(G)
    for g in range(G):
        rows = np.flatnonzero(groups == g)
        try:
            betas[g] = ols(design[rows], ds.y[rows])[0][0]
        except SingularityError as exc:
            raise InfeasibleError(f"beta is not estimable within group {g}: {exc}") from None
    d = betas - beta_null
    t_obs = abs(float(_studentized_means(d)))
    group = make_sign_group(G, B, seed, full_max)
    t_all = np.abs(_studentized_means(group.flips * d))
    tol = 1e-10 * max(1.0, t_obs) if np.isfinite(t_obs) else 0.0
    p = float(np.mean(t_all >= t_obs - tol))
    return TestResult(
        method=f"art_{grouping}",
        statistic=t_obs,
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        draws=len(group),
        seed=seed,
        diagnostics={"beta_g": betas.tolist(), "group_mode": group.mode},
    )


def wild_bootstrap_t_test(
    ds: Dataset,
    beta_null: float = 0.0,
    grouping: Grouping = "cluster",
    B: int = 999,
    seed: int | None = None,
    alpha: float = 0.05,
) -> TestResult:
    """Restricted wild cluster bootstrap-t with Rademacher weights."""
    if B < 1:
        raise ValueError("at least one bootstrap draw is required")
    fit = ols_fit(ds)
    design = ds.design
    groups = _group_index(ds, grouping)
    G = int(groups.max()) + 1
    h = _beta_influence(design, fit.xtx_inverse)

    se = float(np.sqrt(np.sum(_group_sums(h * fit.residuals, groups, G) ** 2)))
    diff = fit.beta_hat - beta_null
    t_obs = diff / se if se > 0 else (0.0 if diff == 0 else np.copysign(np.inf, diff))

    y0 = ds.y - ds.x * beta_null
    resid0 = ols(ds.w, y0)[1] if ds.d else y0
    Q, e0 = _score_map(design, fit.xtx_inverse, h, resid0, groups, G)
    rng = np.random.default_rng(seed)
    weights = _rademacher(rng, B, G)
    num = weights @ e0
    den = np.sqrt(np.sum((weights @ Q.T) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = np.where(den > 0, num / den, np.where(num == 0, 0.0, np.copysign(np.inf, num)))
    exceed = int(np.count_nonzero(np.abs(t_star) >= abs(t_obs)))
    p = (1 + exceed) / (B + 1)
    return TestResult(
        method=f"wild_{grouping}",
        statistic=float(t_obs),
        p_value=p,
        reject=p <= alpha,
        alpha=alpha,
        draws=B,
        seed=seed,
        diagnostics={"se": se, "groups": G, "beta_hat": fit.beta_hat},
    )
