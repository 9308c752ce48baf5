"""Acceptance criteria.

Each test prints one ``PASS``/``FAIL`` line, collected again in the pytest
terminal summary. The Monte Carlo criteria run 1000 replications per cell
and take several minutes on one core; set ``WCR_JOBS`` to use more.

Every simulation uses the single master seed ``SEED``.
"""

import io
import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import random_dataset

from clusterlevel import cli
from clusterlevel.data import Dataset
from clusterlevel.montecarlo import McConfig, default_jobs, power_curve, run_mc
from clusterlevel.randomization import make_sign_group
from clusterlevel.regression import fwl_beta, ols_fit
from clusterlevel.competing import nr_from_scores
from clusterlevel.wcr import prepare_scores, sup_pvalue_oracle, wcr_from_scores, wcr_test

pytestmark = pytest.mark.acceptance

SEED = 20240501
REPS = 1000
JOBS = default_jobs()
GRID = [(r, q, n) for r in (4, 8, 12) for q in (4, 8, 12) for n in (25, 50, 100)]

# reference null rejection rates, Model 1: (NR, WCR, IM, MNW)
TABLE1_MODEL1 = {
    (4, 4, 25): (0.023, 0.000, 0.152, 0.053),
    (8, 8, 50): (0.029, 0.001, 0.089, 0.048),
    (12, 12, 100): (0.030, 0.000, 0.093, 0.056),
}
# reference power, Model 2, (12, 12, 100), rho = 0.5
TABLE2_MODEL2 = {"nr": (0.971, 0.02), "wcr": (0.922, 0.03), "im": (0.998, 0.01), "mnw": (0.996, 0.01)}


def verdict(record, criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    record(line)
    assert ok, line


def rates(cfg):
    return {row.test: row for row in run_mc(cfg)}


def test_criterion_1_model1_null_sizes(acceptance_record):
    ok, parts = True, []
    for cell, (nr, wcr, im, mnw) in TABLE1_MODEL1.items():
        got = rates(McConfig("1", *cell, rho=0.0, reps=REPS, seed=SEED, jobs=JOBS))
        checks = [
            abs(got["nr"].rate - nr) <= 0.02,
            abs(got["mnw"].rate - mnw) <= 0.02,
            abs(got["im"].rate - im) <= 0.03,
            got["wcr"].rate <= 0.005,
        ]
        ok &= all(checks)
        parts.append(f"{cell}: " + " ".join(f"{t}={got[t].rate:.3f}" for t in ("nr", "wcr", "im", "mnw")))
    verdict(acceptance_record, 1, ok, "; ".join(parts))


def test_criterion_2_model2_power(acceptance_record):
    got = rates(McConfig("2", 12, 12, 100, rho=0.5, reps=REPS, seed=SEED, jobs=JOBS))
    ok = all(abs(got[t].rate - target) <= tol for t, (target, tol) in TABLE2_MODEL2.items())
    detail = " ".join(f"{t}={got[t].rate:.3f} (target {v[0]:.3f}+-{v[1]})" for t, v in TABLE2_MODEL2.items())
    verdict(acceptance_record, 2, ok, detail)


def test_criterion_3_wcr_size_everywhere(acceptance_record):
    bound = 0.05 + 3 * math.sqrt(0.05 * 0.95 / REPS)
    worst = (-1.0, None)
    for model in ("1", "2"):
        for cell in GRID:
            rate = run_mc(McConfig(model, *cell, rho=0.0, tests=("wcr",), reps=REPS, seed=SEED, jobs=JOBS))[0].rate
            worst = max(worst, (rate, (model, cell)))
    verdict(acceptance_record, 3, worst[0] <= bound,
            f"max WCR size {worst[0]:.3f} at model {worst[1][0]} {worst[1][1]} over {2 * len(GRID)} cells, "
            f"bound {bound:.4f}")


def test_criterion_4_cluster_heterogeneity(acceptance_record):
    base = McConfig("1", 8, 12, 100, reps=REPS, seed=SEED, jobs=JOBS, tests=("wcr",))
    het = replace(base, sigma={("cluster", 1): 10.0})
    grid = [0.0, 0.5, 1.0, 1.5, 2.0]
    a, b = power_curve(base, grid), power_curve(het, grid)
    ok, parts = True, []
    for rho, x, y in zip(grid, a, b):
        pooled = (x.rejections + y.rejections) / (2 * REPS)
        tol = 3 * math.sqrt(pooled * (1 - pooled) * 2 / REPS)
        ok &= abs(x.rate - y.rate) <= tol
        parts.append(f"rho={rho:g}: {x.rate:.3f} vs {y.rate:.3f} (tol {tol:.3f})")

    others = ("im", "mnw")
    a1 = rates(replace(base, rho=1.0, tests=others))
    b1 = rates(replace(het, rho=1.0, tests=others))
    for t in others:
        ok &= b1[t].rate < a1[t].rate
        parts.append(f"{t} at rho=1: {a1[t].rate:.3f} -> {b1[t].rate:.3f}")
    verdict(acceptance_record, 4, ok, "; ".join(parts))


def test_criterion_5_appendix_b(acceptance_record):
    null = rates(McConfig("appendixB", 4, 12, 100, rho=0.0, tests=("cce", "art_cluster"), reps=REPS,
                          seed=SEED, jobs=JOBS))
    alt = rates(McConfig("appendixB", 4, 12, 100, rho=0.5, tests=("wild",), reps=REPS, seed=SEED, jobs=JOBS))
    coarse, fine = null["cce_cluster"].rate, null["cce_subcluster"].rate
    art = null["art_cluster"].rejections
    w_c, w_f = alt["wild_cluster"].rate, alt["wild_subcluster"].rate
    ok = coarse > 0.10 and 0.03 <= fine <= 0.08 and art == 0 and w_f > w_c
    verdict(acceptance_record, 5, ok,
            f"coarse CCE size {coarse:.3f}, fine CCE size {fine:.3f}, coarse ART rejections {art}, "
            f"wild power coarse {w_c:.3f} fine {w_f:.3f}")


def oracle_suite(seed=SEED, count=200):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        r = int(rng.integers(2, 4))
        q_k = [int(rng.integers(2, 5)) for _ in range(r)]
        yield random_dataset(rng, r, q_k, (5, 30), d=int(rng.integers(0, 3)))


def test_criterion_6_oracle_equivalence(acceptance_record):
    bad = 0
    for ds in oracle_suite():
        layout, scores = prepare_scores(ds)
        group = make_sign_group(layout.q, full_max=12)
        pruned = wcr_from_scores(scores, layout, group, prune=True).p_value
        unpruned = wcr_from_scores(scores, layout, group, prune=False).p_value
        api = wcr_test(ds, full_max=12).p_value
        oracle = sup_pvalue_oracle(ds, full_max=12)
        bad += not (api == pruned == unpruned == oracle)
    verdict(acceptance_record, 6, bad == 0, f"{bad} mismatches over 200 instances")


def test_criterion_7_dominance_and_one_cluster(acceptance_record):
    below = 0
    for ds in oracle_suite():
        layout, scores = prepare_scores(ds)
        group = make_sign_group(layout.q, full_max=12)
        below += wcr_from_scores(scores, layout, group).p_value < nr_from_scores(scores, layout, group).p_value
    rng = np.random.default_rng(SEED + 1)
    not_one = 0
    for _ in range(200):
        ds = random_dataset(rng, 1, int(rng.integers(2, 11)), (5, 30), d=int(rng.integers(0, 3)))
        not_one += wcr_test(ds, seed=0).p_value != 1.0
    verdict(acceptance_record, 7, below == 0 and not_one == 0,
            f"{below} dominance violations over 200 instances; {not_one} of 200 one-cluster instances with p != 1")


def fwl_instances(rng, count):
    for i in range(count):
        d = i % 4
        n = int(rng.integers(20, 200))
        w = rng.standard_normal((n, d)) * rng.uniform(0.1, 100, size=d)
        if d >= 2 and i % 3 == 0:
            w[:, -1] = w[:, 0] * rng.uniform(0.5, 2) + 1e-7 * w[:, 0].std() * rng.standard_normal(n)
        x = rng.standard_normal(n) + (w @ rng.standard_normal(d) if d else 0.0)
        y = rng.standard_normal() * x + (w @ rng.standard_normal(d) if d else 0.0) + rng.standard_normal(n)
        labels = np.array([f"s{j % 5}" for j in range(n)])
        yield Dataset(y, x, w, np.full(n, "c"), labels)


def test_criterion_8_fwl_identity(acceptance_record):
    rng = np.random.default_rng(SEED)
    worst, near = 0.0, 0
    for ds in fwl_instances(rng, 1000):
        b = ols_fit(ds).beta_hat
        worst = max(worst, abs(fwl_beta(ds) - b) / (1 + abs(b)))
        if ds.d >= 2:
            near += np.linalg.cond(ds.w) > 1e6
    verdict(acceptance_record, 8, worst <= 1e-8,
            f"max |fwl - ols| / (1 + |beta|) = {worst:.2e} over 1000 instances ({near} near-collinear)")


def test_criterion_9_jobs_determinism(acceptance_record):
    outputs = {}
    for jobs in ("1", "8"):
        out, err = io.StringIO(), io.StringIO()
        code = cli.main(["simulate", "--model", "2", "--r", "4", "--qk", "4", "--nj", "25", "--rho", "0.5",
                         "--tests", "nr,wcr,im,mnw", "--reps", "200", "--seed", str(SEED), "--jobs", jobs],
                        out, err)
        assert code == 0, err.getvalue()
        outputs[jobs] = out.getvalue().encode()
    verdict(acceptance_record, 9, outputs["1"] == outputs["8"],
            f"--jobs 1 and --jobs 8 CSV ({len(outputs['1'])} bytes) identical: {outputs['1'] == outputs['8']}")
