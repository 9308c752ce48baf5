"""Dataset container, CSV ingestion and the cluster / sub-cluster layout."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Base class for problems with the input data."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class NestingError(DataError):
    pass


@dataclass(frozen=True)
class SchemaSpec:
    outcome: str
    regressor: str
    cluster: str
    subcluster: str
    controls: tuple[str, ...] = ()
    delimiter: str = ","
    header: bool = True

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        names = [self.outcome, self.regressor, *self.controls, self.cluster, self.subcluster]
        seen = set()
        for name in names:
            if name in seen:
                raise SchemaError(f"column {name!r} is used more than once in the schema")
            seen.add(name)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations of ``y = x * beta + w' gamma + u`` with nested group labels.

    ``w`` has shape ``(n, d)``; ``d`` may be zero. Labels are opaque strings.
    """

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    cluster_id: np.ndarray
    subcluster_id: np.ndarray
    control_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        x = np.ascontiguousarray(self.x, dtype=float).reshape(-1)
        n = y.shape[0]
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(n, -1) if w.size else np.empty((n, 0))
        w = np.ascontiguousarray(w)
        cl = np.asarray(self.cluster_id).astype(str)
        sc = np.asarray(self.subcluster_id).astype(str)
        if n < 1:
            raise DataError("dataset has no observations")
        if not (x.shape[0] == w.shape[0] == cl.shape[0] == sc.shape[0] == n):
            raise DataError("y, x, w and label arrays must have the same length")
        for name, arr in (("y", y), ("x", x), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        names = tuple(self.control_names) or tuple(f"w{i + 1}" for i in range(w.shape[1]))
        if len(names) != w.shape[1]:
            raise DataError("control_names does not match the number of control columns")
        for arr in (y, x, w, cl, sc):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "cluster_id", cl)
        object.__setattr__(self, "subcluster_id", sc)
        object.__setattr__(self, "control_names", names)
        check_nesting(cl, sc)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def design(self) -> np.ndarray:
        """Full design ``[x | w]``."""
        return np.column_stack([self.x, self.w])

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        return Dataset(y, self.x, self.w, self.cluster_id, self.subcluster_id, self.control_names)

    def equals(self, other: "Dataset") -> bool:
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.cluster_id, other.cluster_id)
            and np.array_equal(self.subcluster_id, other.subcluster_id)
            and self.control_names == other.control_names
        )


def _owners(cluster_id: np.ndarray, subcluster_id: np.ndarray):
    clusters, cl_inv = np.unique(cluster_id, return_inverse=True)
    subclusters, sc_inv = np.unique(subcluster_id, return_inverse=True)
    lo = np.full(subclusters.shape[0], clusters.shape[0], dtype=np.intp)
    hi = np.full(subclusters.shape[0], -1, dtype=np.intp)
    np.minimum.at(lo, sc_inv, cl_inv)
    np.maximum.at(hi, sc_inv, cl_inv)
    return clusters, cl_inv, subclusters, sc_inv, lo, hi


def check_nesting(cluster_id: np.ndarray, subcluster_id: np.ndarray) -> None:
    clusters, _, subclusters, _, lo, hi = _owners(cluster_id, subcluster_id)
    bad = np.flatnonzero(lo != hi)
    if bad.size:
        j = bad[0]
        raise NestingError(
            f"sub-cluster {subclusters[j]!r} appears under clusters "
            f"{clusters[lo[j]]!r} and {clusters[hi[j]]!r}"
        )


@dataclass(frozen=True, eq=False)
class ClusterLayout:
    """Nesting map cluster -> sub-clusters -> observations.

    Sub-clusters are ordered cluster by cluster (clusters sorted by label,
    sub-clusters sorted by label within a cluster). Every per-sub-cluster
    array in the package uses this order.
    """

    clusters: tuple[str, ...]
    subclusters: tuple[str, ...]
    subclusters_of: dict[str, tuple[str, ...]]
    members_of: dict[str, np.ndarray]
    obs_cluster: np.ndarray = field(repr=False)
    obs_subcluster: np.ndarray = field(repr=False)
    subcluster_cluster: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return len(self.clusters)

    @property
    def q(self) -> int:
        return len(self.subclusters)

    @property
    def q_k(self) -> np.ndarray:
        return np.bincount(self.subcluster_cluster, minlength=self.r)

    @property
    def n_j(self) -> np.ndarray:
        return np.bincount(self.obs_subcluster, minlength=self.q)

    @property
    def n(self) -> int:
        return self.obs_cluster.shape[0]


def build_layout(ds: Dataset) -> ClusterLayout:
    clusters, cl_inv, labels, sc_inv, owner, _ = _owners(ds.cluster_id, ds.subcluster_id)
    # cluster-major order; np.unique already sorted labels lexicographically
    order = np.lexsort((np.arange(labels.shape[0]), owner))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    subclusters = tuple(labels[order].tolist())
    subcluster_cluster = owner[order].astype(np.intp)
    obs_subcluster = rank[sc_inv].astype(np.intp)
    obs_cluster = cl_inv.astype(np.intp)
    clusters = tuple(clusters.tolist())

    subclusters_of = {k: tuple(subclusters[i] for i in np.flatnonzero(subcluster_cluster == c))
                      for c, k in enumerate(clusters)}
    members = np.argsort(obs_subcluster, kind="stable")
    bounds = np.searchsorted(obs_subcluster[members], np.arange(len(subclusters) + 1))
    members_of = {j: members[bounds[i]:bounds[i + 1]] for i, j in enumerate(subclusters)}
    for arr in (obs_cluster, obs_subcluster, subcluster_cluster, *members_of.values()):
        arr.setflags(write=False)
    return ClusterLayout(
        clusters=clusters,
        subclusters=subclusters,
        subclusters_of=subclusters_of,
        members_of=members_of,
        obs_cluster=obs_cluster,
        obs_subcluster=obs_subcluster,
        subcluster_cluster=subcluster_cluster,
    )


def _resolve_columns(header: Sequence[str] | None, schema: SchemaSpec, ncols: int) -> dict[str, int]:
    wanted = [schema.outcome, schema.regressor, *schema.controls, schema.cluster, schema.subcluster]
    out = {}
    for name in wanted:
        if header is not None:
            if name not in header:
                raise SchemaError(f"missing column {name!r}")
            out[name] = header.index(name)
        else:
            try:
                idx = int(name)
            except ValueError:
                raise SchemaError(
                    f"column {name!r} must be a 0-based index when the file has no header"
                ) from None
            if not 0 <= idx < ncols:
                raise SchemaError(f"missing column {name!r}")
            out[name] = idx
    return out


def load_dataset(path: str | Path, schema: SchemaSpec) -> Dataset:
    """Read a delimited text file into a :class:`Dataset`.

    Rows keep file order. Any blank or non-numeric value in the outcome,
    regressor or control columns is an error reported with its line number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        rows = list(reader)
    first_line = 1
    header = None
    if schema.header:
        if not rows:
            raise SchemaError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        first_line = 2
    rows_lines = [(first_line + i, row) for i, row in enumerate(rows) if any(c.strip() for c in row)]
    if not rows_lines:
        raise DataError(f"{path}: no data rows")
    ncols = len(header) if header is not None else len(rows_lines[0][1])
    cols = _resolve_columns(header, schema, ncols)

    numeric = [schema.outcome, schema.regressor, *schema.controls]
    values = np.empty((len(rows_lines), len(numeric)))
    clusters, subclusters = [], []
    for r, (line, row) in enumerate(rows_lines):
        if len(row) != ncols:
            raise ParseError(f"{path}:{line}: expected {ncols} fields, found {len(row)}")
        for c, name in enumerate(numeric):
            cell = row[cols[name]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}:{line}: column {name!r}: cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}:{line}: column {name!r}: non-finite value {cell!r}")
            values[r, c] = v
        k = row[cols[schema.cluster]].strip()
        j = row[cols[schema.subcluster]].strip()
        if not k or not j:
            raise ParseError(f"{path}:{line}: blank cluster or sub-cluster label")
        clusters.append(k)
        subclusters.append(j)

    return Dataset(
        y=values[:, 0],
        x=values[:, 1],
        w=values[:, 2:],
        cluster_id=np.array(clusters),
        subcluster_id=np.array(subclusters),
        control_names=tuple(schema.controls),
    )


def write_dataset(ds: Dataset, path: str | Path, schema: SchemaSpec | None = None) -> SchemaSpec:
    """Write ``ds`` as CSV with 17 significant digits; returns the schema to reload it."""
    if schema is None:
        schema = SchemaSpec(
            outcome="y", regressor="x", controls=ds.control_names,
            cluster="cluster", subcluster="subcluster",
        )
    cols = [schema.outcome, schema.regressor, *schema.controls, schema.cluster, schema.subcluster]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        if schema.header:
            writer.writerow(cols)
        for i in range(ds.n):
            nums = [ds.y[i], ds.x[i], *ds.w[i]]
            writer.writerow([format(v, ".17g") for v in nums] + [ds.cluster_id[i], ds.subcluster_id[i]])
    return schema
