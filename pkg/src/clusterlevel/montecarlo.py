"""Seeded Monte Carlo runner for rejection rates and power curves."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import competing
from .data import ClusterLayout, build_layout
from .dgp import (
    AppendixBConfig,
    ConfigError,
    Model1Config,
    Model2Config,
    gen_appendix_b,
    gen_model1,
    gen_model2,
)
from .randomization import make_sign_group
from .regression import compute_score_components, estimate_pi, ols_fit
from .wcr import wcr_from_scores

CSV_HEADER = ("model", "r", "qk", "nj", "rho", "phi", "test", "reps",
              "rejections", "rate", "mc_se", "errors", "seed")

CLUSTER_TESTS = ("nr", "wcr", "im", "mnw")
BETA_TESTS = ("cce_cluster", "cce_subcluster", "art_cluster", "art_subcluster",
              "wild_cluster", "wild_subcluster")
ALL_TESTS = CLUSTER_TESTS + BETA_TESTS
ALIASES = {
    "cce": ("cce_cluster", "cce_subcluster"),
    "art": ("art_cluster", "art_subcluster"),
    "wild": ("wild_cluster", "wild_subcluster"),
}
MODELS = ("1", "2", "appendixB")

# independent per-rep random streams
_DATA, _SIGNS, _IM, _MNW, _ART, _WILD = range(6)


def normalize_tests(tests: Iterable[str]) -> tuple[str, ...]:
    out: list[str] = []
    for t in tests:
        key = t.strip().lower()
        if not key:
            continue
        names = ALIASES.get(key, (key,))
        for name in names:
            if name not in ALL_TESTS:
                raise ConfigError(f"unknown test {t!r}; choose from {', '.join(ALL_TESTS + tuple(ALIASES))}")
            if name not in out:
                out.append(name)
    if not out:
        raise ConfigError("no tests requested")
    return tuple(out)


@dataclass(frozen=True)
class McConfig:
    """One simulation cell.

    For ``model="appendixB"`` the ``rho`` field carries the null shift
    ``1 - beta_0`` of the inference tests, which is that design's grid
    variable.
    """

    model: str
    r: int
    q_k: int
    n_j: int
    rho: float = 0.0
    phi: float | None = None
    sigma: dict = field(default_factory=dict, hash=False)
    unit_variance: bool = False
    tests: tuple[str, ...] = CLUSTER_TESTS
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 0
    jobs: int = 1
    wcr_B: int = 1000
    im_draws: int = 1000
    mnw_B: int = 399
    wild_B: int = 399
    art_B: int = 1000

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        object.__setattr__(self, "tests", normalize_tests(self.tests))
        self.dgp()  # validates the design

    @property
    def phi_value(self) -> float:
        if self.phi is not None:
            return self.phi
        return 0.5 if self.model == "2" else 0.25

    def dgp(self):
        if self.model == "1":
            return Model1Config(self.r, self.q_k, self.n_j, self.rho, self.phi_value,
                                self.sigma, unit_variance=self.unit_variance)
        if self.model == "2":
            if self.sigma:
                raise ConfigError("sigma overrides apply to Model 1 only")
            return Model2Config(self.r, self.q_k, self.n_j, self.rho, self.phi_value)
        return AppendixBConfig(self.r, self.q_k, self.n_j, self.phi_value)

    @property
    def beta_null(self) -> float:
        return 1.0 - (self.rho if self.model == "appendixB" else 0.0)


@dataclass(frozen=True)
class McResultRow:
    model: str
    r: int
    qk: int
    nj: int
    rho: float
    phi: float
    test: str
    reps: int
    rejections: int
    rate: float
    mc_se: float
    errors: int
    seed: int
    wall_time: float = field(default=0.0, compare=False)

    def csv_fields(self) -> list[str]:
        return [self.model, str(self.r), str(self.qk), str(self.nj), format(self.rho, "g"),
                format(self.phi, "g"), self.test, str(self.reps), str(self.rejections),
                f"{self.rate:.6f}", f"{self.mc_se:.6f}", str(self.errors), str(self.seed)]


def rep_seed(master: int, rep: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(rep, stream))


def _int_seed(master: int, rep: int, stream: int) -> int:
    return int(rep_seed(master, rep, stream).generate_state(1, np.uint64)[0])


def simulate_dataset(cfg: McConfig, rep: int):
    rng = np.random.Generator(np.random.Philox(rep_seed(cfg.seed, rep, _DATA)))
    dgp = cfg.dgp()
    if cfg.model == "1":
        return gen_model1(dgp, rng)
    if cfg.model == "2":
        return gen_model2(dgp, rng)
    return gen_appendix_b(rng, dgp)


def run_rep(cfg: McConfig, rep: int, layout: ClusterLayout | None = None) -> dict[str, bool | None]:
    """Decisions of every requested test on replication ``rep``; ``None`` marks an error.

    ``layout`` may be passed in to skip rebuilding it; every replication of
    a design shares the same labels.
    """
    ds = simulate_dataset(cfg, rep)
    out: dict[str, bool | None] = {}
    tests = set(cfg.tests)
    a = cfg.alpha

    if tests & {"nr", "wcr"}:
        try:
            layout = build_layout(ds) if layout is None else layout
            fit = ols_fit(ds)
            scores = compute_score_components(ds, layout, fit, estimate_pi(ds, layout))
            group = make_sign_group(layout.q, cfg.wcr_B, _int_seed(cfg.seed, rep, _SIGNS))
            if "nr" in tests:
                out["nr"] = competing.nr_from_scores(scores, layout, group, a).reject
            if "wcr" in tests:
                out["wcr"] = wcr_from_scores(scores, layout, group, a).reject
        except ValueError:
            for t in tests & {"nr", "wcr"}:
                out[t] = None

    def attempt(name, fn):
        if name in tests:
            try:
                out[name] = fn().reject
            except ValueError:
                out[name] = None

    b0 = cfg.beta_null
    attempt("im", lambda: competing.im_test(ds, a, cfg.im_draws, _int_seed(cfg.seed, rep, _IM)))
    attempt("mnw", lambda: competing.mnw_test(ds, a, cfg.mnw_B, _int_seed(cfg.seed, rep, _MNW)))
    for g in ("cluster", "subcluster"):
        attempt(f"cce_{g}", lambda g=g: competing.cce_t_test(ds, b0, g, a))
        attempt(f"art_{g}", lambda g=g: competing.art_test(
            ds, b0, g, a, cfg.art_B, _int_seed(cfg.seed, rep, _ART)))
        attempt(f"wild_{g}", lambda g=g: competing.wild_bootstrap_t_test(
            ds, b0, g, cfg.wild_B, _int_seed(cfg.seed, rep, _WILD), a))
    return out


def _run_chunk(cfg: McConfig, reps: Sequence[int]) -> dict[str, tuple[int, int]]:
    tally = {t: [0, 0] for t in cfg.tests}
    layout = None
    for rep in reps:
        if layout is None:
            layout = build_layout(simulate_dataset(cfg, rep))
        for t, decision in run_rep(cfg, rep, layout).items():
            if decision is None:
                tally[t][1] += 1
            elif decision:
                tally[t][0] += 1
    return {t: (v[0], v[1]) for t, v in tally.items()}


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("WCR_JOBS", "1")))
    except ValueError:
        return 1


def run_mc(cfg: McConfig) -> list[McResultRow]:
    """Rejection rate of each requested test over ``cfg.reps`` replications.

    Counts are integer sums over replications whose seeds depend only on
    ``(cfg.seed, rep)``, so the result does not depend on ``cfg.jobs``.
    """
    start = time.perf_counter()
    jobs = max(1, int(cfg.jobs))
    reps = list(range(cfg.reps))
    if jobs == 1 or cfg.reps < 2:
        parts = [_run_chunk(cfg, reps)]
    else:
        n_chunks = min(cfg.reps, jobs * 4)
        chunks = [reps[i::n_chunks] for i in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * len(chunks), chunks))
    wall = time.perf_counter() - start

    rows = []
    for t in cfg.tests:
        rej = sum(p[t][0] for p in parts)
        err = sum(p[t][1] for p in parts)
        used = cfg.reps - err
        rate = rej / used if used else math.nan
        se = math.sqrt(rate * (1 - rate) / used) if used else math.nan
        rows.append(McResultRow(cfg.model, cfg.r, cfg.q_k, cfg.n_j, float(cfg.rho), float(cfg.phi_value),
                                t, cfg.reps, rej, rate, se, err, cfg.seed, wall))
    return rows


def power_curve(cfg: McConfig, rho_grid: Sequence[float]) -> list[McResultRow]:
    """``run_mc`` at each grid value with the same master seed (common random numbers)."""
    if len(rho_grid) == 0:
        raise ConfigError("empty rho grid")
    rows: list[McResultRow] = []
    for rho in rho_grid:
        rows.extend(run_mc(replace(cfg, rho=float(rho))))
    return rows


def parse_grid(spec: str) -> list[float]:
    """``"START:STOP:STEP"`` inclusive of STOP (up to rounding)."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ConfigError(f"grid must look like START:STOP:STEP, got {spec!r}") from None
    if step <= 0 or stop < start:
        if start == stop:
            return [start]
        raise ConfigError(f"empty grid {spec!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def rows_to_csv(rows: Iterable[McResultRow], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def row_dict(row: McResultRow) -> dict:
    return asdict(row)
