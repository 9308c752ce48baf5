import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterlevel import kernels

backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def reference(flips, cluster_of, r, start, order, stops, thresholds):
    """Rebuild every sign vector from scratch at each stop."""
    out = []
    for stop, thr in zip(stops, thresholds):
        s = start.astype(np.int64).copy()
        s[order[:stop]] = 1
        per = np.zeros((flips.shape[0], r), dtype=np.int64)
        for j in range(flips.shape[1]):
            per[:, cluster_of[j]] += flips[:, j] * s[j]
        out.append(int(np.count_nonzero(np.abs(per).sum(axis=1) >= thr)))
    return out


@st.composite
def sweep_problem(draw):
    q = draw(st.integers(1, 9))
    r = draw(st.integers(1, 4))
    B = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    flips = rng.choice(np.array([-1, 1], dtype=np.int8), size=(B, q))
    cluster_of = rng.integers(0, r, size=q)
    zero = rng.random(q) < 0.2
    start = np.where(zero, 0, -1).astype(np.int8)
    order = rng.permutation(np.flatnonzero(~zero))
    stops = np.sort(rng.integers(0, order.size + 1, size=draw(st.integers(1, 5))))
    thresholds = rng.integers(0, q + 2, size=stops.size)
    return flips, cluster_of, r, start, order, stops, thresholds


@pytest.mark.parametrize("backend", backends)
@settings(max_examples=150, deadline=None)
@given(prob=sweep_problem())
def test_backend_matches_reference(backend, prob):
    got = kernels.sweep_counts(*prob, backend=backend)
    assert got.tolist() == reference(*prob)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_backends_agree_on_large_problem():
    rng = np.random.default_rng(5)
    q, r, B = 144, 12, 1000
    flips = rng.choice(np.array([-1, 1], dtype=np.int8), size=(B, q))
    cluster_of = np.repeat(np.arange(r), q // r)
    start = -np.ones(q, dtype=np.int8)
    order = rng.permutation(q)
    stops = np.arange(q + 1)
    thr = rng.integers(0, 40, size=q + 1)
    a = kernels.sweep_counts(flips, cluster_of, r, start, order, stops, thr, backend="python")
    b = kernels.sweep_counts(flips, cluster_of, r, start, order, stops, thr, backend="cython")
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(stops=np.array([2, 1]), thresholds=np.array([0, 0])),
        dict(stops=np.array([4]), thresholds=np.array([0])),
        dict(stops=np.array([1]), thresholds=np.array([0, 1])),
        dict(cluster_of=np.array([0, 5, 0])),
        dict(order=np.array([0, 7])),
    ],
)
def test_rejects_malformed_input(kwargs):
    base = dict(flips=np.ones((2, 3), dtype=np.int8), cluster_of=np.zeros(3, dtype=int), r=1,
                start=-np.ones(3, dtype=np.int8), order=np.array([0, 1, 2]),
                stops=np.array([0]), thresholds=np.array([0]))
    base.update(kwargs)
    with pytest.raises(ValueError):
        kernels.sweep_counts(**base)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.sweep_counts(np.ones((1, 1)), [0], 1, [1], [], [0], [0], backend="fortran")


def test_backend_flag_is_reported():
    assert kernels.BACKEND in ("python", "cython")
