"""The four query strategies behind one interface: random, farthest-point
sampling, cluster-partitioned FPS (OSAL), and MCFPS (FPS seeds, kNN
neighborhoods, MC-Dropout uncertainty, skip-threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classifier, geometry
from .classifier import MlpModel
from .dataset import EmbeddingPool, PoolPartition
from .errors import ValidationError
from .rng import Rng, mix


@dataclass
class StrategyParams:
    neighborhood_k: int = 10
    passes_t: int = 20
    skip_threshold: float = 0.8
    osal_k_range: tuple[int, int] = (2, 10)
    refill_on_skip: bool = False

    def __post_init__(self):
        if self.neighborhood_k < 0:
            raise ValidationError("neighborhood_k must be >= 0")
        if self.passes_t < 1:
            raise ValidationError("passes_t must be >= 1")
        if not 0.0 < self.skip_threshold <= 1.0:
            raise ValidationError("skip_threshold must lie in (0, 1]")
        k_min, k_max = self.osal_k_range
        if not 2 <= k_min <= k_max:
            raise ValidationError("osal_k_range must satisfy 2 <= k_min <= k_max")


@dataclass
class PickDiagnostic:
    pick: int
    seed_index: int
    certainty: float
    uncertainty: float
    cluster: int | None = None


@dataclass
class QueryBatch:
    picks: list[int]
    diagnostics: list[PickDiagnostic]
    skipped: list[int]


@dataclass
class QueryContext:
    """Everything a strategy may look at for one round.

    `round_seed` changes every round; `run_seed` is stable across rounds
    (OSAL's clustering derives from it).  `cache` memoizes values that are
    deterministic functions of the pool and run_seed.
    """

    pool: EmbeddingPool
    partition: PoolPartition
    model: MlpModel
    budget: int
    params: StrategyParams
    round_seed: int
    run_seed: int = 0
    cache: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.budget < 1:
            raise ValidationError("budget must be >= 1")
        if self.budget > len(self.partition.unlabeled):
            raise ValidationError("budget exceeds the unlabeled pool")


def query_random(ctx: QueryContext) -> QueryBatch:
    """Uniform picks without replacement under the round seed."""
    ctx.validate()
    rng = Rng(mix(ctx.round_seed, "random"))
    picks = rng.choose_prefix(ctx.partition.unlabeled.tolist(), ctx.budget)
    picks = [int(p) for p in picks]
    diags = [
        PickDiagnostic(pick=p, seed_index=p, certainty=math.nan, uncertainty=math.nan)
        for p in picks
    ]
    return QueryBatch(picks=picks, diagnostics=diags, skipped=[])


def query_fps(ctx: QueryContext) -> QueryBatch:
    """Greedy max-min picks; labeled samples initialize the distance field."""
    ctx.validate()
    labeled = ctx.partition.labeled
    picks = geometry.farthest_point_sampling(
        ctx.pool.features,
        ctx.partition.unlabeled,
        ctx.budget,
        init_refs=labeled if labeled.size else None,
    )
    diags = [
        PickDiagnostic(pick=p, seed_index=p, certainty=math.nan, uncertainty=math.nan)
        for p in picks
    ]
    return QueryBatch(picks=picks, diagnostics=diags, skipped=[])


def _osal_clusters(ctx: QueryContext) -> dict[int, np.ndarray]:
    """Cluster id -> pool indices over the train (labeled + unlabeled) space.

    Chosen once per run: k by silhouette over the configured range, then
    the matching k-means clustering (same derived seed, so recomputation
    reproduces the cached result bit-for-bit).
    """
    cached = ctx.cache.get("osal-clusters")
    if cached is not None:
        return cached
    train = np.sort(
        np.concatenate([ctx.partition.labeled, ctx.partition.unlabeled])
    )
    feats = ctx.pool.features[train]
    seed = mix(ctx.run_seed, "osal-clustering")
    k_min, k_max = ctx.params.osal_k_range
    k_max = min(k_max, len(train))
    k = geometry.choose_k_by_silhouette(feats, (k_min, max(k_min, k_max)), seed)
    clustering = geometry.kmeans_pp(feats, k, mix(seed, "choose-k", k))
    clusters = {
        c: train[clustering.assignment == c]
        for c in range(k)
        if (clustering.assignment == c).any()
    }
    ctx.cache["osal-clusters"] = clusters
    return clusters


def query_osal(ctx: QueryContext) -> QueryBatch:
    """Equal budget per cluster, FPS inside each, leftovers redistributed."""
    ctx.validate()
    clusters = _osal_clusters(ctx)
    ids = sorted(clusters)
    unlabeled = set(ctx.partition.unlabeled.tolist())
    labeled = set(ctx.partition.labeled.tolist())
    members_unlabeled = {
        c: np.asarray([i for i in clusters[c] if int(i) in unlabeled], dtype=np.int64)
        for c in ids
    }
    avail = {c: len(members_unlabeled[c]) for c in ids}

    base, rem = divmod(ctx.budget, len(ids))
    share = {c: base + (1 if pos < rem else 0) for pos, c in enumerate(ids)}
    take = {c: min(share[c], avail[c]) for c in ids}
    leftover = ctx.budget - sum(take.values())
    while leftover > 0:
        progressed = False
        for c in ids:
            if leftover == 0:
                break
            if take[c] < avail[c]:
                take[c] += 1
                leftover -= 1
                progressed = True
        if not progressed:
            break  # every cluster exhausted

    picks: list[int] = []
    diags: list[PickDiagnostic] = []
    for c in ids:
        if take[c] == 0:
            continue
        refs = np.asarray(
            [i for i in clusters[c] if int(i) in labeled], dtype=np.int64
        )
        chosen = geometry.farthest_point_sampling(
            ctx.pool.features,
            members_unlabeled[c],
            take[c],
            init_refs=refs if refs.size else None,
        )
        picks.extend(chosen)
        diags.extend(
            PickDiagnostic(
                pick=p, seed_index=p, certainty=math.nan, uncertainty=math.nan, cluster=c
            )
            for p in chosen
        )
    return QueryBatch(picks=picks, diagnostics=diags, skipped=[])


def select_from_neighborhood(
    members: list[int], certainties: list[float], skip_threshold: float
) -> int | None:
    """Most-uncertain member (ties to lowest index), or None when every
    member's certainty strictly exceeds the threshold."""
    if all(c > skip_threshold for c in certainties):
        return None
    best = None
    best_cert = math.inf
    for m, c in zip(members, certainties):
        if c < best_cert:
            best = m
            best_cert = c
    return best


class _FpsStream:
    """Incremental farthest-point seed generator over the unlabeled set."""

    def __init__(self, features: np.ndarray, unlabeled: np.ndarray, labeled: np.ndarray):
        self.features = features
        self.subset = np.sort(np.asarray(unlabeled, dtype=np.int64))
        self.pos_of = {int(v): i for i, v in enumerate(self.subset)}
        if labeled.size:
            self.mindist = geometry.min_sq_dists_to_set(
                features[self.subset], features[labeled]
            )
        else:
            self.mindist = np.full(self.subset.size, np.inf, dtype=np.float64)
        self.blocked = np.zeros(self.subset.size, dtype=bool)

    def block(self, index: int) -> None:
        self.blocked[self.pos_of[int(index)]] = True

    def next_seed(self) -> int | None:
        if self.blocked.all():
            return None
        scores = np.where(self.blocked, -np.inf, self.mindist)
        pos = int(np.argmax(scores))
        seed = int(self.subset[pos])
        self.blocked[pos] = True
        np.minimum(
            self.mindist,
            geometry.sq_dists_to_point(self.features[self.subset], self.features[seed]),
            out=self.mindist,
        )
        return seed


def query_mcfps(ctx: QueryContext) -> QueryBatch:
    """FPS seeds, kNN neighborhoods, MC-Dropout uncertainty, one pick per
    neighborhood; fully-certain neighborhoods are skipped."""
    ctx.validate()
    params = ctx.params
    stream = _FpsStream(
        ctx.pool.features, ctx.partition.unlabeled, ctx.partition.labeled
    )
    picks: list[int] = []
    diags: list[PickDiagnostic] = []
    skipped: list[int] = []
    picked: set[int] = set()
    budget_left = ctx.budget
    while budget_left > 0:
        seed_idx = stream.next_seed()
        if seed_idx is None:
            break
        members = {seed_idx}
        if params.neighborhood_k > 0:
            neigh = geometry.knn(
                ctx.pool.features,
                ctx.partition.unlabeled,
                seed_idx,
                params.neighborhood_k,
            )
            members.update(int(i) for i in neigh.indices)
        candidates = sorted(m for m in members if m not in picked)
        if not candidates:
            continue  # fully claimed by earlier neighborhoods; replace the seed
        certainties = []
        for m in candidates:
            u = classifier.mc_dropout(
                ctx.model,
                ctx.pool.features[m],
                params.passes_t,
                mix(ctx.round_seed, "mcfps", seed_idx, m),
            )
            certainties.append(u.certainty)
        choice = select_from_neighborhood(candidates, certainties, params.skip_threshold)
        if choice is None:
            skipped.append(seed_idx)
            if not params.refill_on_skip:
                budget_left -= 1
            continue
        cert = certainties[candidates.index(choice)]
        picks.append(choice)
        picked.add(choice)
        stream.block(choice)
        diags.append(
            PickDiagnostic(
                pick=choice,
                seed_index=seed_idx,
                certainty=cert,
                uncertainty=1.0 - cert,
            )
        )
        budget_left -= 1
    return QueryBatch(picks=picks, diagnostics=diags, skipped=skipped)


STRATEGIES = {
    "random": query_random,
    "fps": query_fps,
    "osal": query_osal,
    "mcfps": query_mcfps,
}


def run_strategy(name: str, ctx: QueryContext) -> QueryBatch:
    if name not in STRATEGIES:
        raise ValidationError(
            f"unknown strategy {name!r}; valid ids: {', '.join(sorted(STRATEGIES))}"
        )
    return STRATEGIES[name](ctx)
