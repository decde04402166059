"""Experiment data model, distances, and the smoothing kernel.

Units are externally strings and internally dense indices 0..N-1; the mapping
is the order of first appearance in the units file and is carried on
``ExperimentData.unit_ids``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, shortest_path
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = [
    "ValidationError",
    "ExperimentData",
    "DistanceProvider",
    "SmoothingKernel",
    "CounterfactualBound",
    "validate",
    "distances_from_edges",
    "build_kernel",
    "read_units_csv",
    "read_caps_csv",
    "read_network_file",
]

DENSE_LIMIT = 2000  # dense all-pairs distance matrices allowed up to this N

UPPER_ON_THETA = "upper-on-theta"
LOWER_ON_THETA = "lower-on-theta"


class ValidationError(ValueError):
    """Raised when inputs violate a documented contract."""


def _require_integers(values: np.ndarray, name: str) -> None:
    if np.issubdtype(values.dtype, np.integer) or values.dtype == np.bool_:
        return
    if not np.issubdtype(values.dtype, np.floating):
        raise ValidationError(f"{name} must be integer-valued")
    if not np.all(np.isfinite(values)) or np.any(values != np.floor(values)):
        raise ValidationError(f"{name} must be integer-valued")


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Observed experiment: assignment X, outcomes Y, and the design sizes."""

    treatment: np.ndarray
    outcomes: np.ndarray
    unit_ids: tuple = ()

    @classmethod
    def from_arrays(cls, treatment, outcomes, unit_ids=None):
        x = np.asarray(treatment)
        y = np.asarray(outcomes)
        _require_integers(y, "outcomes")
        _require_integers(x, "treatment")
        data = cls(
            treatment=x.astype(np.int8, copy=True),
            outcomes=y.astype(np.int64, copy=True),
            unit_ids=tuple(unit_ids) if unit_ids is not None else (),
        )
        validate(data)
        return data

    @property
    def n_units(self) -> int:
        return int(self.treatment.shape[0])

    @property
    def treated_count(self) -> int:
        return int(self.treatment.sum())

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.outcomes == 0) | (self.outcomes == 1)))

    @property
    def total_outcomes(self) -> int:
        return int(self.outcomes.sum())

    def untreated_outcomes(self) -> np.ndarray:
        return self.outcomes[self.treatment == 0]

    def treated_outcomes(self) -> np.ndarray:
        return self.outcomes[self.treatment == 1]


def validate(data: ExperimentData, require_binary: bool = False) -> None:
    """Check the ExperimentData invariants; raise ValidationError on failure."""
    x = data.treatment
    y = data.outcomes
    if x.ndim != 1 or y.ndim != 1:
        raise ValidationError("treatment and outcomes must be 1-d sequences")
    if x.shape[0] != y.shape[0]:
        raise ValidationError(
            f"length mismatch: {x.shape[0]} treatments vs {y.shape[0]} outcomes")
    n = x.shape[0]
    if n == 0:
        raise ValidationError("empty experiment")
    if not np.all((x == 0) | (x == 1)):
        raise ValidationError("treatment must be binary")
    if data.unit_ids and len(data.unit_ids) != n:
        raise ValidationError("unit_ids length mismatch")
    treated = int(x.sum())
    if treated == 0:
        raise ValidationError("no treated units (L = 0)")
    if treated == n:
        raise ValidationError("no untreated units (L = N)")
    if np.any(y < 0):
        raise ValidationError("outcomes must be nonnegative integers")
    if require_binary and not data.is_binary:
        raise ValidationError("outcomes must be binary for this method")


@dataclass(frozen=True, eq=False)
class CounterfactualBound:
    """One-sided confidence bound on the counterfactual outcome total."""

    theta_sum_bound: float
    direction: str
    alpha: float
    method: str
    attributable_lower: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction not in (UPPER_ON_THETA, LOWER_ON_THETA):
            raise ValidationError(f"unknown direction {self.direction!r}")


class DistanceProvider:
    """Pairwise unit distances from coordinates, an edge list, or a matrix.

    Distances are symmetric with zero diagonal; unreachable pairs are
    +infinity.  Neighbor queries are lazy so grid-scale inputs never
    materialize the full N x N matrix.
    """

    def __init__(self, mode, n_units, coords=None, adjacency=None, dense=None):
        self.mode = mode
        self.n_units = n_units
        self._coords = coords
        self._adjacency = adjacency
        self._dense = dense
        self._tree = None

    @classmethod
    def from_coordinates(cls, coords):
        pts = np.asarray(coords, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValidationError("coordinates must be an (N, k) array")
        return cls("euclidean-coordinates", pts.shape[0], coords=pts)

    @classmethod
    def from_matrix(cls, matrix):
        d = np.asarray(matrix, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError("distance matrix must be square")
        if np.any(np.diag(d) != 0.0):
            raise ValidationError("distance matrix diagonal must be zero")
        finite = np.isfinite(d)
        if np.any(d[finite] < 0):
            raise ValidationError("distances must be nonnegative")
        if not np.array_equal(d, d.T):
            raise ValidationError("distance matrix must be symmetric")
        return cls("explicit-matrix", d.shape[0], dense=d)

    def _kdtree(self):
        if self._tree is None:
            self._tree = cKDTree(self._coords)
        return self._tree

    def distance(self, i: int, j: int) -> float:
        if self.mode == "euclidean-coordinates":
            return float(np.linalg.norm(self._coords[i] - self._coords[j]))
        if self.mode == "explicit-matrix":
            return float(self._dense[i, j])
        row = dijkstra(self._adjacency, indices=[i])[0]
        return float(row[j])

    def matrix(self) -> np.ndarray:
        """Dense all-pairs distances (guarded; intended for N <= 2000)."""
        if self.n_units > DENSE_LIMIT and self._dense is None:
            raise ValidationError(
                f"dense distance matrix requested for N={self.n_units} "
                f"(limit {DENSE_LIMIT}); use a finite kernel cutoff instead")
        if self._dense is not None:
            return self._dense.copy()
        if self.mode == "euclidean-coordinates":
            return cdist(self._coords, self._coords)
        return shortest_path(self._adjacency, method="D", directed=False)

    def pairs_within(self, radius: float):
        """Off-diagonal pairs (i, j, d_ij) with d_ij <= radius, i != j."""
        if not math.isfinite(radius):
            d = self.matrix()
            rows, cols = np.nonzero(np.isfinite(d))
            keep = rows != cols
            return rows[keep], cols[keep], d[rows[keep], cols[keep]]
        if self.mode == "euclidean-coordinates":
            return self._euclidean_pairs(radius)
        if self.mode == "explicit-matrix":
            rows, cols = np.nonzero(self._dense <= radius)
            keep = rows != cols
            return rows[keep], cols[keep], self._dense[rows[keep], cols[keep]]
        return self._graph_pairs(radius)

    def _euclidean_pairs(self, radius):
        tree = self._kdtree()
        rows_out, cols_out, dist_out = [], [], []
        chunk = 2048
        for start in range(0, self.n_units, chunk):
            stop = min(start + chunk, self.n_units)
            hits = tree.query_ball_point(self._coords[start:stop], r=radius)
            for off, nbrs in enumerate(hits):
                i = start + off
                cols = np.sort(np.asarray(nbrs, dtype=np.int64))
                cols = cols[cols != i]
                if cols.size == 0:
                    continue
                rows_out.append(np.full(cols.size, i, dtype=np.int64))
                cols_out.append(cols)
                dist_out.append(np.linalg.norm(
                    self._coords[cols] - self._coords[i], axis=1))
        if not rows_out:
            empty = np.zeros(0)
            return empty.astype(np.int64), empty.astype(np.int64), empty
        return (np.concatenate(rows_out), np.concatenate(cols_out),
                np.concatenate(dist_out))

    def _graph_pairs(self, radius):
        rows_out, cols_out, dist_out = [], [], []
        chunk = 256
        for start in range(0, self.n_units, chunk):
            idx = np.arange(start, min(start + chunk, self.n_units))
            block = dijkstra(self._adjacency, indices=idx, limit=radius,
                             directed=False)
            src, dst = np.nonzero(np.isfinite(block))
            for a, b in zip(src, dst):
                i = int(idx[a])
                j = int(b)
                if i == j:
                    continue
                rows_out.append(i)
                cols_out.append(j)
                dist_out.append(float(block[a, b]))
        return (np.array(rows_out, dtype=np.int64),
                np.array(cols_out, dtype=np.int64),
                np.array(dist_out, dtype=np.float64))


def distances_from_edges(edges, n_units: int) -> DistanceProvider:
    """Shortest-path distances from an edge list.

    Unweighted edges count hops; weighted edges use weighted shortest paths.
    Self-loops are dropped, duplicate edges keep the smallest weight, and
    negative weights are rejected.
    """
    best = {}
    for edge in edges:
        if len(edge) == 2:
            i, j = edge
            w = 1.0
        else:
            i, j, w = edge
            w = float(w)
        i = int(i)
        j = int(j)
        if not (0 <= i < n_units and 0 <= j < n_units):
            raise ValidationError(f"edge endpoint out of range: ({i}, {j})")
        if w < 0:
            raise ValidationError(f"negative edge weight on ({i}, {j})")
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key not in best or w < best[key]:
            best[key] = w
    if best:
        rows = np.array([k[0] for k in best], dtype=np.int64)
        cols = np.array([k[1] for k in best], dtype=np.int64)
        vals = np.array(list(best.values()), dtype=np.float64)
        adj = sp.coo_matrix(
            (np.concatenate([vals, vals]),
             (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(n_units, n_units)).tocsr()
    else:
        adj = sp.csr_matrix((n_units, n_units))
    return DistanceProvider("shortest-path-edges", n_units, adjacency=adj)


@dataclass(frozen=True, eq=False)
class SmoothingKernel:
    """Column-stochastic gaussian kernel K of Eq-type exp(-d^2/sigma^2)/Z_j."""

    matrix: sp.csc_matrix
    bandwidth: float
    cutoff: float
    normalizers: np.ndarray

    @property
    def n_units(self) -> int:
        return self.matrix.shape[0]

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def smooth_treatment(self, x) -> np.ndarray:
        """Row vector x^T K (each entry a weighted average of x)."""
        row = sp.csr_matrix(np.asarray(x, dtype=np.float64)[None, :])
        return (row @ self.matrix).toarray().ravel()

    def restricted_gram(self, free_idx) -> np.ndarray:
        """(K^T K)[free, free] as a dense array."""
        cols = self.matrix[:, free_idx]
        return np.asarray((cols.T @ cols).todense())

    def check(self) -> None:
        sums = self.column_sums()
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise AssertionError("kernel columns must sum to 1 within 1e-12")
        if self.matrix.data.size and (self.matrix.data.min() < 0
                                      or self.matrix.data.max() > 1.0 + 1e-12):
            raise AssertionError("kernel entries must lie in [0, 1]")


def build_kernel(distances: DistanceProvider, sigma_k: float,
                 d_max_k: float) -> SmoothingKernel:
    """Construct the column-normalized smoothing kernel.

    K_ij = exp(-d_ij^2 / sigma_k^2) / Z_j for d_ij <= d_max_k, else 0, with
    Z_j chosen so each column sums to one.  The diagonal always survives the
    cutoff (d_ii = 0), so no column can be empty.
    """
    if sigma_k <= 0:
        raise ValidationError(f"sigma_k must be positive, got {sigma_k}")
    if d_max_k < 0:
        raise ValidationError(f"d_max_k must be nonnegative, got {d_max_k}")
    n = distances.n_units
    if not math.isfinite(d_max_k) and n > DENSE_LIMIT:
        raise ValidationError(
            f"infinite cutoff needs a dense kernel; N={n} exceeds {DENSE_LIMIT}")
    rows, cols, dists = distances.pairs_within(d_max_k)
    weights = np.exp(-(dists ** 2) / sigma_k ** 2)
    # Diagonal contributes exp(0) = 1 to every column.
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    weights = np.concatenate([weights, np.ones(n)])
    raw = sp.coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsc()
    z = np.asarray(raw.sum(axis=0)).ravel()
    if np.any(z <= 0):
        raise AssertionError("kernel column normalizer must be positive")
    inv = sp.diags(1.0 / z, format="csc")
    kernel = SmoothingKernel(
        matrix=(raw @ inv).tocsc(),
        bandwidth=float(sigma_k),
        cutoff=float(d_max_k),
        normalizers=z,
    )
    kernel.check()
    return kernel


def _read_rows(path):
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read file: {path} ({exc.strerror})") from exc
    with handle:
        return list(csv.reader(handle))


def read_units_csv(path) -> ExperimentData:
    """Units file: CSV with header ``unit_id,treated,outcome``."""
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0][:3]] != ["unit_id", "treated", "outcome"]:
        raise ValidationError(
            f"units file {path} must start with header unit_id,treated,outcome")
    ids, treated, outcomes = [], [], []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 3 or any(not c.strip() for c in row[:3]):
            raise ValidationError(f"{path}:{lineno}: missing value")
        uid = row[0].strip()
        if uid in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate unit_id {uid!r}")
        seen.add(uid)
        try:
            t = int(row[1])
            y = int(row[2])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: non-integer field") from exc
        if t not in (0, 1):
            raise ValidationError(f"{path}:{lineno}: treated must be 0 or 1")
        if y < 0:
            raise ValidationError(f"{path}:{lineno}: outcome must be nonnegative")
        ids.append(uid)
        treated.append(t)
        outcomes.append(y)
    if not ids:
        raise ValidationError(f"units file {path} has no data rows")
    return ExperimentData.from_arrays(treated, outcomes, unit_ids=ids)


def read_caps_csv(path, unit_ids) -> np.ndarray:
    """Caps file: CSV with header ``unit_id,cap``; aligned to ``unit_ids``."""
    rows = _read_rows(path)
    if not rows or [c.strip() for c in rows[0][:2]] != ["unit_id", "cap"]:
        raise ValidationError(f"caps file {path} must start with header unit_id,cap")
    caps = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2:
            raise ValidationError(f"{path}:{lineno}: missing value")
        try:
            caps[row[0].strip()] = int(row[1])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: non-integer cap") from exc
    missing = [u for u in unit_ids if u not in caps]
    if missing:
        raise ValidationError(f"caps file {path} missing units: {missing[:5]}")
    return np.array([caps[u] for u in unit_ids], dtype=np.int64)


def read_network_file(path, mode, unit_ids) -> DistanceProvider:
    """Network file in one of three formats selected by ``mode``.

    coords: CSV ``unit_id,x,y``; edges: CSV ``src,dst[,weight]``; matrix:
    whitespace-separated dense distances.
    """
    index = {u: k for k, u in enumerate(unit_ids)}
    n = len(unit_ids)
    if mode == "matrix":
        try:
            dense = np.loadtxt(path)
        except OSError as exc:
            raise ValidationError(f"cannot read file: {path}") from exc
        if dense.shape != (n, n):
            raise ValidationError(
                f"distance matrix shape {dense.shape} does not match N={n}")
        return DistanceProvider.from_matrix(dense)
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"network file {path} is empty")
    if mode == "coords":
        if [c.strip() for c in rows[0][:3]] != ["unit_id", "x", "y"]:
            raise ValidationError(
                f"coords file {path} must start with header unit_id,x,y")
        coords = np.full((n, 2), np.nan)
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            uid = row[0].strip()
            if uid not in index:
                raise ValidationError(f"{path}:{lineno}: unknown unit {uid!r}")
            coords[index[uid]] = [float(row[1]), float(row[2])]
        if np.isnan(coords).any():
            raise ValidationError(f"coords file {path} does not cover every unit")
        return DistanceProvider.from_coordinates(coords)
    if mode == "edges":
        start = 1 if [c.strip() for c in rows[0][:2]] == ["src", "dst"] else 0
        edges = []
        for lineno, row in enumerate(rows[start:], start=start + 1):
            if not row or all(not c.strip() for c in row):
                continue
            src, dst = row[0].strip(), row[1].strip()
            if src not in index or dst not in index:
                raise ValidationError(f"{path}:{lineno}: unknown unit id")
            if len(row) >= 3 and row[2].strip():
                edges.append((index[src], index[dst], float(row[2])))
            else:
                edges.append((index[src], index[dst]))
        return distances_from_edges(edges, n)
    raise ValidationError(f"unknown network mode {mode!r}")
