"""Spherical k-means over unit-norm embeddings.

Centroids are renormalized to unit length after every update, assignment
maximizes cosine similarity, and every seeded choice is keyed on point ids
(not row positions) so fits are bitwise reproducible across runs and thread
counts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import chunk_ranges, map_ordered
from .embedding_store import UnitEmbeddingMatrix
from .errors import FormatError, InvalidArgumentError
from .rng import hashed_uniform

MODEL_MAGIC = b"SEMK"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIII")

CENTROID_NORM_TOL = 1e-6
OBJECTIVE_SLACK = 1e-7

# Fixed grid for chunked passes; a function of k only, never of thread count.
_SCORE_BUDGET = 16_000_000


def _pass_chunk(k: int) -> int:
    return max(64, min(16384, _SCORE_BUDGET // max(k, 1)))


# Tags separating the independent hashed-uniform streams used by fit().
_TAG_SUBSAMPLE = 11
_TAG_INIT_ROUND = 1 << 20


@dataclass
class KMeansModel:
    """Fitted clustering: unit centroids, per-point assignment, member lists."""

    centroids: np.ndarray
    assignment: np.ndarray
    members: list = field(default=None)  # type: ignore[assignment]
    objective_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        self.assignment = np.ascontiguousarray(self.assignment, dtype=np.uint32)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise InvalidArgumentError("centroids must be a non-empty 2-D matrix")
        norms = np.linalg.norm(self.centroids.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > CENTROID_NORM_TOL:
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise InvalidArgumentError(f"centroid {worst} has norm {norms[worst]:.9f}")
        if self.assignment.size and int(self.assignment.max()) >= self.k:
            raise InvalidArgumentError("assignment refers to a cluster >= k")
        if self.members is None:
            self.members = _members_from_assignment(self.assignment, self.k)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k).astype(np.int64)


def _members_from_assignment(assignment: np.ndarray, k: int) -> list:
    order = np.argsort(assignment, kind="stable")
    sizes = np.bincount(assignment, minlength=k)
    bounds = np.concatenate(([0], np.cumsum(sizes)))
    return [np.sort(order[bounds[c]:bounds[c + 1]]).astype(np.int64) for c in range(k)]


def _assign_pass(data: np.ndarray, centroids64: np.ndarray, threads: int):
    """Argmax-cosine assignment plus the winning cosine, chunked over points."""
    n = data.shape[0]
    k = centroids64.shape[0]
    assignment = np.empty(n, dtype=np.uint32)
    best = np.empty(n, dtype=np.float64)
    ct = centroids64.T

    def one(span):
        lo, hi = span
        scores = data[lo:hi].astype(np.float64) @ ct
        idx = np.argmax(scores, axis=1)  # ties -> lowest cluster index
        assignment[lo:hi] = idx.astype(np.uint32)
        best[lo:hi] = scores[np.arange(hi - lo), idx]
        return None

    map_ordered(one, chunk_ranges(n, _pass_chunk(k)), threads)
    return assignment, best


def _centroid_sums(data: np.ndarray, assignment: np.ndarray, k: int, threads: int):
    """Per-cluster float64 row sums; chunk partials combined in grid order."""
    n, d = data.shape

    def one(span):
        lo, hi = span
        a = assignment[lo:hi]
        order = np.argsort(a, kind="stable")
        sorted_a = a[order]
        block = data[lo:hi][order].astype(np.float64)
        starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
        part = np.zeros((k, d), dtype=np.float64)
        part[sorted_a[starts]] = np.add.reduceat(block, starts, axis=0)
        return part, np.bincount(a, minlength=k).astype(np.int64)

    parts = map_ordered(one, chunk_ranges(n, _pass_chunk(k)), threads)
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for part, cnt in parts:
        sums += part
        counts += cnt
    return sums, counts


def _objective(data: np.ndarray, centroids64: np.ndarray, assignment: np.ndarray, threads: int) -> float:
    n = data.shape[0]

    def one(span):
        lo, hi = span
        block = data[lo:hi].astype(np.float64)
        return float(np.einsum("ij,ij->i", block, centroids64[assignment[lo:hi]]).sum())

    totals = map_ordered(one, chunk_ranges(n, _pass_chunk(centroids64.shape[0])), threads)
    return float(sum(totals)) / n


def _init_centroids(data: np.ndarray, ids: np.ndarray, k: int, seed: int, sample_cap: int) -> np.ndarray:
    """Careful-seeding initialization keyed on (seed, id).

    Centers are drawn one at a time; each round holds an exponential race
    with per-id hashed uniforms and rates equal to the squared chord
    distance to the nearest chosen center, which reproduces the usual
    distance-weighted seeding while staying independent of row order. On
    large inputs the race runs over the id-keyed subsample of ``sample_cap``
    points with the smallest hash, which keeps init O(cap * k) and
    deterministic.
    """
    n = data.shape[0]
    cap = min(n, max(sample_cap, 4 * k))
    if cap < n:
        keys = hashed_uniform(seed, _TAG_SUBSAMPLE, ids)
        positions = np.argpartition(keys, cap - 1)[:cap]
    else:
        positions = np.arange(n)
    # Canonical ascending-id order makes argmin ties resolve to lowest id.
    positions = positions[np.argsort(ids[positions], kind="stable")]
    sub = data[positions].astype(np.float64)
    sub_ids = ids[positions]
    m = sub.shape[0]

    chosen = np.zeros(m, dtype=bool)
    centroids = np.empty((k, data.shape[1]), dtype=np.float64)

    u = hashed_uniform(seed, _TAG_INIT_ROUND, sub_ids)
    pick = int(np.argmin(u))
    chosen[pick] = True
    centroids[0] = sub[pick]
    max_cos = sub @ centroids[0]

    for r in range(1, k):
        weights = np.maximum(2.0 - 2.0 * max_cos, 0.0)
        weights[chosen] = 0.0
        u = hashed_uniform(seed, _TAG_INIT_ROUND + r, sub_ids)
        with np.errstate(divide="ignore"):
            race = np.where(weights > 0.0, -np.log(u) / weights, np.inf)
        if not np.isfinite(race).any():
            # Every remaining point coincides with a chosen center; fall back
            # to a uniform id-keyed pick among the unchosen.
            race = np.where(chosen, np.inf, u)
        pick = int(np.argmin(race))
        chosen[pick] = True
        centroids[r] = sub[pick]
        np.maximum(max_cos, sub @ centroids[r], out=max_cos)

    norms = np.linalg.norm(centroids, axis=1)
    return centroids / norms[:, None]


def _repair_empty_clusters(assignment, best_cos, sizes) -> int:
    """Move the globally worst-fitting point into each empty cluster.

    Only points in clusters of size >= 2 are candidates, so no donor
    cluster is emptied. Ties resolve to the lowest point index. Returns
    the number of moves.
    """
    moves = 0
    for c in np.flatnonzero(sizes == 0):
        eligible = sizes[assignment] >= 2
        scores = np.where(eligible, best_cos, np.inf)
        idx = int(np.argmin(scores))
        if not np.isfinite(scores[idx]):
            break  # k == n with duplicates; nothing movable
        sizes[assignment[idx]] -= 1
        assignment[idx] = c
        sizes[c] += 1
        best_cos[idx] = np.inf  # singleton now; not a candidate again
        moves += 1
    return moves


def fit(
    e: UnitEmbeddingMatrix,
    k: int,
    iterations: int,
    seed: int,
    threads: int = 1,
    init_sample_cap: int = 16384,
) -> KMeansModel:
    """Cluster unit embeddings into k clusters.

    Runs at most ``iterations`` rounds of assignment + centroid update,
    stopping early once assignments no longer change. The mean cosine to the
    assigned centroid is recorded per round and never decreases (within
    1e-7).
    """
    n = e.n
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if k > n:
        raise InvalidArgumentError(f"k={k} exceeds point count n={n}")
    if iterations < 1:
        raise InvalidArgumentError("iterations must be >= 1")

    centroids64 = _init_centroids(e.data, e.ids, k, seed, init_sample_cap)
    assignment = None
    trace: list[float] = []

    for _ in range(iterations):
        new_assignment, best_cos = _assign_pass(e.data, centroids64, threads)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        sizes = np.bincount(assignment, minlength=k).astype(np.int64)
        _repair_empty_clusters(assignment, best_cos, sizes)

        sums, counts = _centroid_sums(e.data, assignment, k, threads)
        norms = np.linalg.norm(sums, axis=1)
        usable = (counts > 0) & (norms > 1e-12)
        centroids64[usable] = sums[usable] / norms[usable, None]

        trace.append(_objective(e.data, centroids64, assignment, threads))

    return KMeansModel(
        centroids=centroids64.astype(np.float32),
        assignment=assignment,
        objective_trace=trace,
    )


def assign(e: UnitEmbeddingMatrix, centroids: np.ndarray, threads: int = 1) -> np.ndarray:
    """Nearest-centroid (max cosine) assignment; ties go to the lowest index."""
    centroids = np.asarray(centroids)
    if centroids.ndim != 2 or centroids.shape[1] != e.d:
        raise InvalidArgumentError(
            f"centroid dimension {centroids.shape} does not match embeddings d={e.d}"
        )
    assignment, _ = _assign_pass(e.data, centroids.astype(np.float64), threads)
    return assignment


def nearest_clusters(model: KMeansModel, c: int, m: int) -> np.ndarray:
    """The m clusters most cosine-similar to centroid c, descending.

    Excludes c itself; ties resolve to the lowest cluster index.
    """
    k = model.k
    if not 0 <= c < k:
        raise InvalidArgumentError(f"cluster index {c} out of range [0,{k})")
    if m < 1 or m >= k:
        raise InvalidArgumentError(f"m={m} must be in [1, k-1]={k - 1}")
    cents = model.centroids.astype(np.float64)
    sims = cents @ cents[c]
    sims[c] = -np.inf
    order = np.argsort(-sims, kind="stable")
    return order[:m].astype(np.int64)


def save_model(model: KMeansModel, path) -> None:
    """Write a model as SEMK1: magic, version, k, d, centroids, n, assignment."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.k, model.d))
        fh.write(np.ascontiguousarray(model.centroids, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", model.n))
        fh.write(np.ascontiguousarray(model.assignment, dtype="<u4").tobytes())


def load_model(path) -> KMeansModel:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"no such file: {path}")
    with open(path, "rb") as fh:
        header = fh.read(_MODEL_HEADER.size)
        if len(header) != _MODEL_HEADER.size:
            raise FormatError("truncated model header")
        magic, version, k, d = _MODEL_HEADER.unpack(header)
        if magic != MODEL_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        if k < 1 or d < 1:
            raise FormatError(f"invalid model dimensions k={k} d={d}")
        cent_bytes = fh.read(k * d * 4)
        if len(cent_bytes) != k * d * 4:
            raise FormatError("truncated centroid block")
        n_bytes = fh.read(8)
        if len(n_bytes) != 8:
            raise FormatError("truncated point count")
        (n,) = struct.unpack("<Q", n_bytes)
        assign_bytes = fh.read(n * 4)
        if len(assign_bytes) != n * 4:
            raise FormatError("truncated assignment block")
        if fh.read(1):
            raise FormatError("trailing bytes after payload")
    centroids = np.frombuffer(cent_bytes, dtype="<f4").reshape(k, d).copy()
    assignment = np.frombuffer(assign_bytes, dtype="<u4").copy()
    if assignment.size and int(assignment.max()) >= k:
        raise FormatError("assignment refers to a cluster >= k")
    return KMeansModel(centroids=centroids, assignment=assignment)
