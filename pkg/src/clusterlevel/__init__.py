"""Tests for the level of clustering in a linear regression.

The main entry point is :func:`wcr_test`, a worst-case randomization test of
the null that sub-clusters are independent within each coarse cluster.
Competing tests, data-generating processes and a Monte Carlo harness live in
the submodules.
"""

from .competing import (
    TestResult,
    art_test,
    cce_t_test,
    im_test,
    mnw_test,
    nr_test,
    wild_bootstrap_t_test,
)
from .data import ClusterLayout, DataError, Dataset, SchemaSpec, build_layout, load_dataset
from .dgp import ConfigError, Model1Config, Model2Config, gen_appendix_b, gen_model1, gen_model2
from .kernels import BACKEND
from .montecarlo import McConfig, power_curve, run_mc
from .randomization import SignGroup, make_sign_group
from .regression import fwl_beta, ols_fit
from .wcr import WcrResult, sup_pvalue_oracle, wcr_test

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClusterLayout",
    "ConfigError",
    "DataError",
    "Dataset",
    "McConfig",
    "Model1Config",
    "Model2Config",
    "SchemaSpec",
    "SignGroup",
    "TestResult",
    "WcrResult",
    "art_test",
    "build_layout",
    "cce_t_test",
    "fwl_beta",
    "gen_appendix_b",
    "gen_model1",
    "gen_model2",
    "im_test",
    "load_dataset",
    "make_sign_group",
    "mnw_test",
    "nr_test",
    "ols_fit",
    "power_curve",
    "run_mc",
    "sup_pvalue_oracle",
    "wcr_test",
    "wild_bootstrap_t_test",
]
