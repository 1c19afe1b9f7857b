"""Exact geometry kernels over flat float32 matrices.

Distances accumulate in float64.  Every tie (argmax, argmin, neighbor
ordering) resolves to the lowest index so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import Rng, mix

_CHUNK = 4096


@dataclass
class NeighborList:
    """k nearest pool indices with their Euclidean distances, ascending."""

    indices: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class Clustering:
    k: int
    centers: np.ndarray
    assignment: np.ndarray
    inertia: float


def euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(d @ d))


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def sq_dists_to_point(features: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from every row to `point`, float64."""
    out = np.empty(features.shape[0], dtype=np.float64)
    p = np.asarray(point, dtype=np.float64)
    for start in range(0, features.shape[0], _CHUNK):
        block = features[start : start + _CHUNK].astype(np.float64) - p
        out[start : start + _CHUNK] = np.einsum("ij,ij->i", block, block)
    return out


def min_sq_dists_to_set(features: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Per-row min squared distance to any reference row (BLAS bulk path)."""
    r64 = refs.astype(np.float64)
    r_sq = np.einsum("ij,ij->i", r64, r64)
    out = np.full(features.shape[0], np.inf, dtype=np.float64)
    for start in range(0, features.shape[0], _CHUNK):
        block = features[start : start + _CHUNK].astype(np.float64)
        b_sq = np.einsum("ij,ij->i", block, block)
        cross = block @ r64.T
        d2 = b_sq[:, None] + r_sq[None, :] - 2.0 * cross
        out[start : start + _CHUNK] = np.maximum(d2.min(axis=1), 0.0)
    return out


def farthest_point_sampling(
    features: np.ndarray,
    subset,
    count: int,
    seed_index: int | None = None,
    init_refs=None,
) -> list[int]:
    """Greedy max-min selection of `count` indices from `subset`.

    Without `init_refs` the first pick is `seed_index` (lowest subset index
    by default); with references the min-distance field starts against them
    and every pick, including the first, maximizes it.
    """
    subset = np.sort(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise ValidationError("farthest_point_sampling needs a non-empty subset")
    if count == 0:
        return []
    if count > subset.size:
        raise ValidationError(f"count {count} exceeds subset size {subset.size}")
    cand = features[subset]
    refs = None if init_refs is None else np.asarray(init_refs, dtype=np.int64)
    if refs is not None and refs.size:
        mindist = min_sq_dists_to_set(cand, features[refs])
        first_pos = int(np.argmax(mindist))
    else:
        mindist = np.full(subset.size, np.inf, dtype=np.float64)
        if seed_index is None:
            first_pos = 0
        else:
            pos = np.searchsorted(subset, seed_index)
            if pos >= subset.size or subset[pos] != seed_index:
                raise ValidationError("seed_index must belong to the subset")
            first_pos = int(pos)
    picks = [first_pos]
    for _ in range(1, count):
        last = cand[picks[-1]]
        np.minimum(mindist, sq_dists_to_point(cand, last), out=mindist)
        mindist[picks[-1]] = -np.inf
        picks.append(int(np.argmax(mindist)))
    return [int(subset[p]) for p in picks]


def knn(features: np.ndarray, subset, query_index: int, k: int) -> NeighborList:
    """The k nearest subset members to the query (query itself excluded)."""
    if k < 1:
        raise ValidationError("knn needs k >= 1")
    subset = np.sort(np.asarray(subset, dtype=np.int64))
    pos = np.searchsorted(subset, query_index)
    if pos >= subset.size or subset[pos] != query_index:
        raise ValidationError("query_index must belong to the subset")
    others = np.delete(subset, pos)
    if others.size == 0:
        return NeighborList(
            indices=np.empty(0, dtype=np.int64),
            distances=np.empty(0, dtype=np.float64),
        )
    d2 = sq_dists_to_point(features[others], features[query_index])
    order = np.argsort(d2, kind="stable")[:k]
    return NeighborList(indices=others[order], distances=np.sqrt(d2[order]))


def _assign(x64: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center assignment (ties to lowest center) and its sq-dists."""
    n = x64.shape[0]
    assignment = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c_sq = np.einsum("ij,ij->i", centers, centers)
    for start in range(0, n, _CHUNK):
        block = x64[start : start + _CHUNK]
        b_sq = np.einsum("ij,ij->i", block, block)
        d2 = b_sq[:, None] + c_sq[None, :] - 2.0 * block @ centers.T
        np.maximum(d2, 0.0, out=d2)
        assignment[start : start + _CHUNK] = np.argmin(d2, axis=1)
        best[start : start + _CHUNK] = d2[np.arange(block.shape[0]), assignment[start : start + _CHUNK]]
    return assignment, best


def kmeans_pp(
    features: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> Clustering:
    """k-means++ seeding (D^2 sampling on the fixed PRNG) plus Lloyd.

    Stops when the assignment is stable or the max center shift drops
    below `tol`.  An emptied cluster is re-seeded at the point farthest
    from its old center.
    """
    n = features.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, {n}]")
    rng = Rng(mix(seed, "kmeans-pp"))
    x64 = features.astype(np.float64)

    chosen = [rng.below(n)]
    d2 = sq_dists_to_point(features, features[chosen[0]])
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            for idx in range(n):  # duplicate-heavy pool: lowest unused index
                if idx not in chosen:
                    chosen.append(idx)
                    break
        else:
            u = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            chosen.append(min(nxt, n - 1))
        np.minimum(d2, sq_dists_to_point(features, features[chosen[-1]]), out=d2)

    centers = x64[chosen].copy()
    assignment, _ = _assign(x64, centers)
    for _ in range(max_iters):
        new_centers = np.empty_like(centers)
        for c in range(k):
            members = assignment == c
            if members.any():
                new_centers[c] = x64[members].mean(axis=0)
            else:
                far = int(np.argmax(sq_dists_to_point(features, centers[c])))
                new_centers[c] = x64[far]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        new_assignment, _ = _assign(x64, centers)
        stable = bool((new_assignment == assignment).all())
        assignment = new_assignment
        if stable or shift < tol:
            break
    _, best = _assign(x64, centers)
    return Clustering(k=k, centers=centers, assignment=assignment, inertia=float(best.sum()))


def silhouette(features: np.ndarray, assignment) -> float:
    """Mean silhouette over all samples; singleton clusters contribute 0."""
    assignment = np.asarray(assignment, dtype=np.int64)
    n = features.shape[0]
    if assignment.shape != (n,):
        raise ValidationError("assignment length must equal the pool size")
    cluster_ids, dense = np.unique(assignment, return_inverse=True)
    k = len(cluster_ids)
    if k < 2:
        raise ValidationError("silhouette needs at least 2 clusters")
    counts = np.bincount(dense, minlength=k).astype(np.float64)
    onehot = np.zeros((n, k), dtype=np.float64)
    onehot[np.arange(n), dense] = 1.0
    x64 = features.astype(np.float64)
    x_sq = np.einsum("ij,ij->i", x64, x64)
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        block = x64[start : start + _CHUNK]
        rows = np.arange(start, min(start + _CHUNK, n))
        d2 = x_sq[rows][:, None] + x_sq[None, :] - 2.0 * block @ x64.T
        np.maximum(d2, 0.0, out=d2)
        dist = np.sqrt(d2)
        sums = dist @ onehot  # (chunk, k) total distance into each cluster
        own = dense[rows]
        own_count = counts[own]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(
                own_count > 1,
                sums[np.arange(len(rows)), own] / np.maximum(own_count - 1.0, 1.0),
                0.0,
            )
            means = sums / counts[None, :]
            means[np.arange(len(rows)), own] = np.inf
            b = means.min(axis=1)
            denom = np.maximum(a, b)
            s = np.where(denom > 0.0, (b - a) / denom, 0.0)
        s = np.where(own_count > 1, s, 0.0)  # singleton convention
        scores[rows] = s
    return float(scores.mean())


def choose_k_by_silhouette(
    features: np.ndarray, k_range: tuple[int, int], seed: int
) -> int:
    """The k in [k_min, k_max] whose k-means clustering scores best."""
    k_min, k_max = int(k_range[0]), int(k_range[1])
    n = features.shape[0]
    if not 2 <= k_min <= k_max <= n:
        raise ValidationError("need 2 <= k_min <= k_max <= n")
    best_k = k_min
    best_score = -np.inf
    for k in range(k_min, k_max + 1):
        clustering = kmeans_pp(features, k, mix(seed, "choose-k", k))
        if len(np.unique(clustering.assignment)) < 2:
            score = -1.0  # collapsed clustering scores worst
        else:
            score = silhouette(features, clustering.assignment)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k
