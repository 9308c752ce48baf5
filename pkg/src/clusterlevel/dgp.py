"""Simulation designs: Model 1, Model 2 and the coarse-vs-fine inference demo."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .data import Dataset

N_FACTORS = 10


class ConfigError(ValueError):
    pass


def _labels(r: int, q_k: int) -> tuple[list[str], list[list[str]]]:
    wk, wj = max(2, len(str(r))), max(2, len(str(q_k)))
    ks = [f"K{k + 1:0{wk}d}" for k in range(r)]
    return ks, [[f"{kk}-J{j + 1:0{wj}d}" for j in range(q_k)] for kk in ks]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ar1_paths(rng: np.random.Generator, shape: tuple[int, int], phi: float, init_sd: float) -> np.ndarray:
    """Rows of ``U_t = phi * U_{t-1} + eps_t`` with unit innovations and ``U_1 ~ N(0, init_sd^2)``."""
    eps = rng.standard_normal(shape)
    eps[:, 0] *= init_sd
    return lfilter([1.0], [1.0, -phi], eps, axis=1)


SIGMA_ITEM = re.compile(r"^\s*(?:cluster(\d+)|subcluster(\d+)|(\d+):(\d+))\s*=\s*([^,]+?)\s*$")


def parse_sigma(spec: str | None) -> dict:
    """Parse ``"cluster1=10,subcluster2=5,3:4=2"`` into scale overrides.

    ``clusterK`` scales every sub-cluster of cluster K, ``subclusterJ`` the
    J-th sub-cluster of every cluster, ``K:J`` one cell. Indices are 1-based;
    later items win.
    """
    out: dict = {}
    if not spec:
        return out
    for item in spec.split(","):
        m = SIGMA_ITEM.match(item)
        if not m:
            raise ConfigError(f"cannot parse sigma item {item!r}")
        try:
            value = float(m.group(5))
        except ValueError:
            raise ConfigError(f"cannot parse sigma value in {item!r}") from None
        if not value > 0:
            raise ConfigError(f"sigma must be positive, got {value}")
        if m.group(1):
            out[("cluster", int(m.group(1)))] = value
        elif m.group(2):
            out[("subcluster", int(m.group(2)))] = value
        else:
            out[(int(m.group(3)), int(m.group(4)))] = value
    return out


@dataclass(frozen=True)
class Model1Config:
    """Cluster shock plus within-sub-cluster AR(1) errors; the regressor is 1.

    ``unit_variance=True`` rescales the AR(1) term so its stationary
    variance is one instead of ``1 / (1 - phi^2)^2``.
    """

    r: int
    q_k: int
    n_j: int
    rho: float = 0.0
    phi: float = 0.25
    sigma: dict = field(default_factory=dict, hash=False)
    beta: float = 1.0
    unit_variance: bool = False

    def __post_init__(self):
        if min(self.r, self.q_k, self.n_j) < 1:
            raise ConfigError("r, q_k and n_j must be positive")
        if not abs(self.phi) < 1:
            raise ConfigError("phi must lie in (-1, 1)")
        if self.rho < 0:
            raise ConfigError("rho must be non-negative")
        for key, v in self.sigma.items():
            if not v > 0:
                raise ConfigError("sigma must be positive")
            if key[0] == "cluster" and not 1 <= key[1] <= self.r:
                raise ConfigError(f"sigma refers to cluster {key[1]} but r = {self.r}")
            if key[0] == "subcluster" and not 1 <= key[1] <= self.q_k:
                raise ConfigError(f"sigma refers to sub-cluster {key[1]} but q_k = {self.q_k}")

    def sigma_matrix(self) -> np.ndarray:
        out = np.ones((self.r, self.q_k))
        for key, v in self.sigma.items():
            if key[0] == "cluster":
                out[key[1] - 1, :] = v
            elif key[0] == "subcluster":
                out[:, key[1] - 1] = v
            else:
                out[key[0] - 1, key[1] - 1] = v
        return out


def _model1_errors(rng, r, q_k, n_j, rho, phi, init_sd, scale, sigma):
    shock = rng.standard_normal((r, n_j))
    u = ar1_paths(rng, (r * q_k, n_j), phi, init_sd).reshape(r, q_k, n_j) * scale
    return sigma[:, :, None] * (rho * shock[:, None, :] + u)


def _panel_dataset(y, x, w, r, q_k, n_j, control_names=()):
    ks, js = _labels(r, q_k)
    cl = np.repeat(np.array(ks), q_k * n_j)
    sc = np.repeat(np.array([j for row in js for j in row]), n_j)
    return Dataset(y, x, w, cl, sc, control_names)


def gen_model1(cfg: Model1Config, seed=None) -> Dataset:
    rng = _as_rng(seed)
    c = np.sqrt(1.0 - cfg.phi**2)
    scale = c if cfg.unit_variance else 1.0 / c
    err = _model1_errors(rng, cfg.r, cfg.q_k, cfg.n_j, cfg.rho, cfg.phi, 1.0 / c, scale, cfg.sigma_matrix())
    n = cfg.r * cfg.q_k * cfg.n_j
    x = np.ones(n)
    return _panel_dataset(cfg.beta * x + err.reshape(-1), x, np.empty((n, 0)), cfg.r, cfg.q_k, cfg.n_j)


@dataclass(frozen=True)
class AppendixBConfig:
    """Independent sub-clusters with AR(1) errors started at ``U_1 ~ N(0, 1)``."""

    r: int = 4
    q_k: int = 12
    n_j: int = 100
    phi: float = 0.25
    beta: float = 1.0

    def __post_init__(self):
        if min(self.r, self.q_k, self.n_j) < 1:
            raise ConfigError("r, q_k and n_j must be positive")
        if not abs(self.phi) < 1:
            raise ConfigError("phi must lie in (-1, 1)")


def gen_appendix_b(seed=None, cfg: AppendixBConfig | None = None) -> Dataset:
    cfg = AppendixBConfig() if cfg is None else cfg
    rng = _as_rng(seed)
    c = np.sqrt(1.0 - cfg.phi**2)
    err = _model1_errors(rng, cfg.r, cfg.q_k, cfg.n_j, 0.0, cfg.phi, 1.0, 1.0 / c,
                         np.ones((cfg.r, cfg.q_k)))
    n = cfg.r * cfg.q_k * cfg.n_j
    x = np.ones(n)
    return _panel_dataset(cfg.beta * x + err.reshape(-1), x, np.empty((n, 0)), cfg.r, cfg.q_k, cfg.n_j)


@dataclass(frozen=True)
class Model2Config:
    """Ten AR(1) factors loaded block-wise within each cluster.

    Error and both covariates share the construction; covariate 1 is the
    regressor of interest and covariate 2 the (only) control.
    """

    r: int
    q_k: int
    n_j: int
    rho: float = 0.0
    phi: float = 0.5
    beta: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if min(self.r, self.q_k, self.n_j) < 1:
            raise ConfigError("r, q_k and n_j must be positive")
        if not 0 <= self.rho <= 1:
            raise ConfigError("rho must lie in [0, 1] for Model 2")
        if not abs(self.phi) < 1:
            raise ConfigError("phi must lie in (-1, 1)")
        if self.q_k * self.n_j < N_FACTORS:
            raise ConfigError(f"each cluster needs at least {N_FACTORS} observations")


def factor_loading_columns(m: int) -> np.ndarray:
    """0-based factor index of each of the ``m`` positions in a cluster."""
    return (np.arange(m) * N_FACTORS) // m


def deal_positions(m: int, q_k: int) -> np.ndarray:
    """Sub-cluster of each position when dealing factor blocks round-robin."""
    return np.arange(m) % q_k


def _factor_series(rng, r, m, rho, phi, loading):
    xi = ar1_paths(rng, (r, N_FACTORS), phi, 1.0 / np.sqrt(1.0 - phi**2)) * np.sqrt(1.0 - phi**2)
    eps = rng.standard_normal((r, m))
    return rho * xi[:, loading] + np.sqrt(1.0 - rho**2) * eps


def gen_model2(cfg: Model2Config, seed=None) -> Dataset:
    rng = _as_rng(seed)
    m = cfg.q_k * cfg.n_j
    loading = factor_loading_columns(m)
    u, x1, x2 = (_factor_series(rng, cfg.r, m, cfg.rho, cfg.phi, loading) for _ in range(3))
    # positions dealt round-robin so each sub-cluster gets an equal share of every block
    order = np.argsort(deal_positions(m, cfg.q_k), kind="stable")
    u, x1, x2 = (a[:, order].reshape(-1) for a in (u, x1, x2))
    y = cfg.beta[0] * x1 + cfg.beta[1] * x2 + u
    return _panel_dataset(y, x1, x2[:, None], cfg.r, cfg.q_k, cfg.n_j, ("x2",))
