"""OLS fits, projection coefficients and per-sub-cluster score components."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from .data import ClusterLayout, Dataset

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
# squared relative size below which a residualized regressor counts as exactly zero
ZERO_DENOMINATOR_TOL = 1e-20


class SingularityError(ValueError):
    """Raised when a design matrix does not have full column rank."""


@dataclass(frozen=True, eq=False)
class RegressionFit:
    beta_hat: float
    gamma_hat: np.ndarray
    residuals: np.ndarray
    xtx_inverse: np.ndarray

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([[self.beta_hat], self.gamma_hat])


@dataclass(frozen=True, eq=False)
class PiEstimates:
    """Projection coefficients of x on w, one row per sub-cluster (layout order)."""

    pi_hat: np.ndarray
    subclusters: tuple[str, ...]
    mode: Literal["subcluster", "pooled"]
    dropped_columns: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.pi_hat[self.subclusters.index(label)]


@dataclass(frozen=True, eq=False)
class SubclusterScores:
    """Numerator ``N_j`` and denominator ``D_j`` of the lambda-shifted scores.

    ``S_j(lam) = (N_j + lam * D_j) / sqrt(n_j)``.
    """

    numerator: np.ndarray
    denominator: np.ndarray
    n_j: np.ndarray

    def shifted(self, lam: float) -> np.ndarray:
        return (self.numerator + lam * self.denominator) / np.sqrt(self.n_j)

    @property
    def naive(self) -> np.ndarray:
        return self.shifted(0.0)


def ols(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least squares by Householder QR in the given column order.

    Returns ``(coef, residuals, (M'M)^{-1})``.
    """
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    if p == 0:
        return np.empty(0), np.asarray(y, dtype=float).copy(), np.empty((0, 0))
    if n < p:
        raise SingularityError(f"design has {p} columns but only {n} rows")
    q_mat, r_mat = np.linalg.qr(design)
    diag = np.abs(np.diag(r_mat))
    if diag.max() == 0.0 or diag.min() <= PIVOT_TOL * diag.max():
        raise SingularityError(
            "design matrix is rank deficient; drop collinear controls"
        )
    coef = scipy.linalg.solve_triangular(r_mat, q_mat.T @ y)
    r_inv = scipy.linalg.solve_triangular(r_mat, np.eye(p))
    return coef, y - design @ coef, r_inv @ r_inv.T


def ols_fit(ds: Dataset) -> RegressionFit:
    coef, resid, xtx_inv = ols(ds.design, ds.y)
    return RegressionFit(
        beta_hat=float(coef[0]),
        gamma_hat=coef[1:],
        residuals=resid,
        xtx_inverse=xtx_inv,
    )


def _pivoted_projection(w: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Coefficients of ``x`` on a maximal independent subset of ``w``'s columns.

    Columns whose pivot falls below ``PIVOT_TOL`` times the largest pivot get
    coefficient exactly zero.
    """
    n, d = w.shape
    coef = np.zeros(d)
    if d == 0:
        return coef, ()
    if d == 1:
        ss = float(w[:, 0] @ w[:, 0])
        if ss == 0.0:
            return coef, (0,)
        coef[0] = float(w[:, 0] @ x) / ss
        return coef, ()
    _, r_mat, piv = scipy.linalg.qr(w, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    if diag.size == 0 or diag[0] == 0.0:
        return coef, tuple(range(d))
    rank = int(np.sum(diag > PIVOT_TOL * diag[0]))
    keep = np.sort(piv[:rank])
    sub = w[:, keep]
    sol, *_ = np.linalg.lstsq(sub, x, rcond=None)
    coef[keep] = sol
    return coef, tuple(sorted(set(range(d)) - set(keep.tolist())))


def estimate_pi(
    ds: Dataset,
    layout: ClusterLayout,
    mode: Literal["subcluster", "pooled"] = "subcluster",
) -> PiEstimates:
    """Project the regressor of interest on the controls.

    ``mode="subcluster"`` runs one regression per sub-cluster and drops
    rank-deficient columns; it switches to ``"pooled"`` when some sub-cluster
    has fewer observations than controls.
    """
    if mode not in ("subcluster", "pooled"):
        raise ValueError(f"unknown mode {mode!r}")
    d = ds.d
    q = layout.q
    if mode == "subcluster" and d > 0 and np.any(layout.n_j < d):
        log.warning("some sub-cluster has fewer observations than controls; using pooled projection")
        mode = "pooled"
    pi_hat = np.zeros((q, d))
    dropped: dict[str, tuple[int, ...]] = {}
    if d == 0:
        return PiEstimates(pi_hat, layout.subclusters, mode, dropped)
    if mode == "pooled":
        coef, drop = _pivoted_projection(ds.w, ds.x)
        pi_hat[:] = coef
        if drop:
            dropped = {j: drop for j in layout.subclusters}
    elif d == 1:
        g = layout.obs_subcluster
        ww = np.bincount(g, weights=ds.w[:, 0] ** 2, minlength=q)
        wx = np.bincount(g, weights=ds.w[:, 0] * ds.x, minlength=q)
        nonzero = ww > 0
        pi_hat[nonzero, 0] = wx[nonzero] / ww[nonzero]
        dropped = {layout.subclusters[i]: (0,) for i in np.flatnonzero(~nonzero)}
    else:
        for idx, j in enumerate(layout.subclusters):
            rows = layout.members_of[j]
            coef, drop = _pivoted_projection(ds.w[rows], ds.x[rows])
            pi_hat[idx] = coef
            if drop:
                dropped[j] = drop
    pi_hat.setflags(write=False)
    return PiEstimates(pi_hat, layout.subclusters, mode, dropped)


def residualized_regressor(ds: Dataset, layout: ClusterLayout, pi: PiEstimates) -> np.ndarray:
    """``x_i - w_i' pi_j``, snapped to exact zero on sub-clusters where x lies in span(w)."""
    e = ds.x - np.einsum("ij,ij->i", ds.w, pi.pi_hat[layout.obs_subcluster]) if ds.d else ds.x.copy()
    g = layout.obs_subcluster
    ss_e = np.bincount(g, weights=e * e, minlength=layout.q)
    ss_x = np.bincount(g, weights=ds.x * ds.x, minlength=layout.q)
    zero = ss_e <= ZERO_DENOMINATOR_TOL * ss_x
    if np.any(zero):
        e = np.where(zero[g], 0.0, e)
    return e


def compute_score_components(
    ds: Dataset,
    layout: ClusterLayout,
    fit: RegressionFit,
    pi: PiEstimates,
) -> SubclusterScores:
    e = residualized_regressor(ds, layout, pi)
    g = layout.obs_subcluster
    num = np.bincount(g, weights=e * fit.residuals, minlength=layout.q)
    den = np.bincount(g, weights=e * e, minlength=layout.q)
    return SubclusterScores(numerator=num, denominator=den, n_j=layout.n_j)


def sandwich(
    design: np.ndarray,
    residuals: np.ndarray,
    groups: np.ndarray,
    xtx_inverse: np.ndarray,
) -> np.ndarray:
    """Liang-Zeger sandwich with no small-sample factor.

    ``groups`` holds an integer group index per observation.
    """
    groups = np.asarray(groups)
    _, inv = np.unique(groups, return_inverse=True)
    scores = design * residuals[:, None]
    g_scores = np.zeros((inv.max() + 1, design.shape[1]))
    np.add.at(g_scores, inv, scores)
    meat = g_scores.T @ g_scores
    return xtx_inverse @ meat @ xtx_inverse


def cce_sandwich(
    ds: Dataset,
    fit: RegressionFit,
    grouping: Literal["cluster", "subcluster"] = "cluster",
) -> np.ndarray:
    if grouping == "cluster":
        groups = ds.cluster_id
    elif grouping == "subcluster":
        groups = ds.subcluster_id
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    return sandwich(ds.design, fit.residuals, groups, fit.xtx_inverse)


def fwl_beta(ds: Dataset) -> float:
    """Coefficient on x from the partialled-out regression.

    Projections use an SVD least-squares solve, independent of the QR path
    in :func:`ols_fit`.
    """
    x, y, w = ds.x, ds.y, ds.w
    if ds.d:
        sol, _, rank, sv = np.linalg.lstsq(w, np.column_stack([x, y]), rcond=None)
        if rank < ds.d:
            raise SingularityError("controls are collinear (W'W is singular)")
        ex = x - w @ sol[:, 0]
        ey = y - w @ sol[:, 1]
    else:
        ex, ey = x, y
    den = float(ex @ ex)
    if den <= ZERO_DENOMINATOR_TOL * float(x @ x) or den == 0.0:
        raise SingularityError("regressor lies in the column span of the controls")
    return float(ex @ ey) / den
