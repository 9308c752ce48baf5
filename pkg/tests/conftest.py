import numpy as np
import pytest

from clusterlevel.data import Dataset


def random_dataset(rng, r, q_k, n_j, d=1, intercept=True, beta=0.5, labels=None):
    """Gaussian clustered data; ``q_k`` and ``n_j`` may be ints or per-unit lists."""
    q_list = [q_k] * r if np.isscalar(q_k) else list(q_k)
    cl, sc, sizes = [], [], []
    for k, qk in enumerate(q_list):
        for j in range(qk):
            n = n_j if np.isscalar(n_j) else int(rng.integers(n_j[0], n_j[1] + 1))
            cl += [f"C{k}"] * n
            sc += [f"C{k}S{j}"] * n
            sizes.append(n)
    n = len(cl)
    x = rng.standard_normal(n)
    cols = []
    if intercept and d > 0:
        cols.append(np.ones(n))
    while len(cols) < d:
        cols.append(rng.standard_normal(n))
    w = np.column_stack(cols) if cols else np.empty((n, 0))
    y = beta * x + (w @ np.ones(d) if d else 0.0) + rng.standard_normal(n)
    names = tuple(f"w{i}" for i in range(d))
    return Dataset(y, x, w, np.array(cl), np.array(sc), names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_data():
    return random_dataset


@pytest.fixture
def small_ds(rng):
    return random_dataset(rng, 3, 3, 20, d=2)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
