"""Query strategies: random, FPS, OSAL, MCFPS."""

import numpy as np
import pytest

from albench.classifier import MlpConfig, init_model, train
from albench.dataset import (
    EmbeddingPool,
    PoolPartition,
    SyntheticSpec,
    gen_synthetic,
    split_pool,
)
from albench.errors import ValidationError
from albench.strategies import (
    QueryContext,
    StrategyParams,
    query_fps,
    query_mcfps,
    query_osal,
    query_random,
    run_strategy,
    select_from_neighborhood,
)
from oracles import fps_oracle


def make_ctx(pool, budget, labeled=(), params=None, round_seed=1, model=None, **kw):
    labeled = np.asarray(sorted(labeled), dtype=np.int64)
    test = kw.pop("test", np.empty(0, dtype=np.int64))
    unlabeled = np.setdiff1d(
        np.arange(pool.n, dtype=np.int64), np.concatenate([labeled, np.asarray(test, dtype=np.int64)])
    )
    partition = PoolPartition(labeled=labeled, unlabeled=unlabeled, test=test)
    if model is None:
        model = init_model(
            MlpConfig(
                input_dim=pool.dim,
                num_classes=max(pool.num_classes, 2),
                hidden_dims=(16,),
                weight_init_seed=3,
            )
        )
    return QueryContext(
        pool=pool,
        partition=partition,
        model=model,
        budget=budget,
        params=params or StrategyParams(neighborhood_k=3, passes_t=4),
        round_seed=round_seed,
        run_seed=11,
        **kw,
    )


def blob_pool(classes=4, per_class=20, dim=4, seed=2, spread=0.3, separation=8.0):
    return gen_synthetic(
        SyntheticSpec(
            classes=classes,
            dim=dim,
            per_class=per_class,
            spread=spread,
            separation=separation,
            seed=seed,
        )
    )


def assert_valid_batch(batch, ctx):
    assert len(batch.picks) <= ctx.budget
    assert len(set(batch.picks)) == len(batch.picks)
    unlabeled = set(ctx.partition.unlabeled.tolist())
    assert all(p in unlabeled for p in batch.picks)


# --- params validation ---


def test_params_validation():
    with pytest.raises(ValidationError):
        StrategyParams(neighborhood_k=-1)
    with pytest.raises(ValidationError):
        StrategyParams(passes_t=0)
    with pytest.raises(ValidationError):
        StrategyParams(skip_threshold=0.0)
    with pytest.raises(ValidationError):
        StrategyParams(osal_k_range=(1, 5))
    StrategyParams(neighborhood_k=0)  # degenerate neighborhoods are allowed


def test_unknown_strategy_id():
    pool = blob_pool()
    ctx = make_ctx(pool, 2)
    with pytest.raises(ValidationError):
        run_strategy("bogus", ctx)


# --- random ---


def test_random_exhaustion():
    pool = blob_pool(classes=2, per_class=5)
    ctx = make_ctx(pool, 10)
    batch = query_random(ctx)
    assert sorted(batch.picks) == list(range(10))


def test_random_deterministic():
    pool = blob_pool()
    a = query_random(make_ctx(pool, 7, round_seed=5))
    b = query_random(make_ctx(pool, 7, round_seed=5))
    assert a.picks == b.picks
    c = query_random(make_ctx(pool, 7, round_seed=6))
    assert a.picks != c.picks


def test_random_frequencies_are_uniform():
    feats = np.arange(10, dtype=np.float32).reshape(10, 1)
    pool = EmbeddingPool(features=feats, labels=np.zeros(10, dtype=np.int64) , num_classes=1)
    counts = np.zeros(10)
    for seed in range(1000):
        ctx = make_ctx(pool, 1, round_seed=seed)
        counts[query_random(ctx).picks[0]] += 1
    assert np.all(np.abs(counts - 100) <= 40)


# --- fps ---


def test_fps_first_round_collinear():
    feats = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]], dtype=np.float32)
    pool = EmbeddingPool(features=feats)
    ctx = make_ctx(pool, 2)
    batch = query_fps(ctx)
    assert sorted(batch.picks) == [0, 2]


def test_fps_exhaustion():
    pool = blob_pool(classes=2, per_class=6)
    ctx = make_ctx(pool, 12)
    assert sorted(query_fps(ctx).picks) == list(range(12))


def test_fps_second_round_disjoint_from_labeled():
    pool = blob_pool()
    labeled = [0, 1, 2, 3]
    ctx = make_ctx(pool, 8, labeled=labeled)
    batch = query_fps(ctx)
    assert_valid_batch(batch, ctx)
    assert not set(batch.picks) & set(labeled)


def test_fps_matches_labeled_aware_oracle():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 40))
        feats = rng.normal(size=(n, 3)).astype(np.float32)
        pool = EmbeddingPool(features=feats)
        labeled = sorted(rng.choice(n, size=3, replace=False).tolist())
        ctx = make_ctx(pool, 5, labeled=labeled)
        got = query_fps(ctx).picks
        want = fps_oracle(
            feats, ctx.partition.unlabeled.tolist(), 5, init_refs=labeled
        )
        assert got == want


def test_budget_validation():
    pool = blob_pool(classes=2, per_class=3)
    with pytest.raises(ValidationError):
        query_fps(make_ctx(pool, 7))  # only 6 unlabeled
    with pytest.raises(ValidationError):
        query_fps(make_ctx(pool, 0))


# --- osal ---


def test_osal_equal_allocation_two_blobs():
    pool = blob_pool(classes=2, per_class=20, spread=0.1, separation=12.0)
    params = StrategyParams(osal_k_range=(2, 4))
    ctx = make_ctx(pool, 4, params=params)
    batch = query_osal(ctx)
    assert_valid_batch(batch, ctx)
    assert len(batch.picks) == 4
    clusters = [d.cluster for d in batch.diagnostics]
    assert sorted(np.bincount(clusters).tolist()) == [2, 2]


def test_osal_redistributes_small_cluster():
    # cluster B has a single unlabeled member: 1 + 3 split over budget 4
    feats = np.concatenate(
        [
            np.random.default_rng(1).normal(0.0, 0.2, size=(12, 2)),
            np.array([[30.0, 30.0]]),
        ]
    ).astype(np.float32)
    pool = EmbeddingPool(features=feats)
    params = StrategyParams(osal_k_range=(2, 3))
    ctx = make_ctx(pool, 4, params=params)
    batch = query_osal(ctx)
    assert_valid_batch(batch, ctx)
    assert len(batch.picks) == 4
    assert 12 in batch.picks  # the lone far point is its own cluster
    counts = np.bincount([d.cluster for d in batch.diagnostics])
    assert sorted(counts[counts > 0].tolist()) == [1, 3]


def test_osal_cluster_choice_cached_and_deterministic():
    pool = blob_pool(classes=3, per_class=15, spread=0.1, separation=10.0)
    params = StrategyParams(osal_k_range=(2, 5))
    ctx = make_ctx(pool, 6, params=params)
    a = query_osal(ctx)
    assert "osal-clusters" in ctx.cache
    b = query_osal(make_ctx(pool, 6, params=params))
    assert a.picks == b.picks


def test_osal_isolated_class_dominates_one_cluster():
    # one class far away in feature space: its cluster's picks are that class
    pool = blob_pool(classes=4, per_class=15, spread=0.2, separation=3.0)
    feats = pool.features.copy()
    feats[pool.labels == 3] += 60.0
    pool = EmbeddingPool(features=feats, labels=pool.labels, num_classes=4)
    params = StrategyParams(osal_k_range=(2, 6))
    ctx = make_ctx(pool, 8, params=params)
    batch = query_osal(ctx)
    by_cluster: dict[int, list[int]] = {}
    for d in batch.diagnostics:
        by_cluster.setdefault(d.cluster, []).append(int(pool.labels[d.pick]))
    isolated = [
        labs for labs in by_cluster.values() if np.mean(np.array(labs) == 3) >= 0.8
    ]
    assert isolated, f"no cluster dominated by the isolated class: {by_cluster}"


# --- mcfps ---


def test_select_from_neighborhood_picks_most_uncertain():
    assert select_from_neighborhood([10, 11, 12], [0.9, 0.6, 0.5], 0.95) == 12


def test_select_from_neighborhood_ties_to_lowest_index():
    assert select_from_neighborhood([4, 9], [0.5, 0.5], 1.0) == 4


def test_select_from_neighborhood_skips_when_all_certain():
    assert select_from_neighborhood([1, 2, 3], [0.95, 0.9, 0.85], 0.8) is None
    # strict inequality: certainty exactly at the threshold is kept
    assert select_from_neighborhood([1], [0.8], 0.8) == 1


def test_mcfps_invariants_and_determinism():
    pool = blob_pool()
    params = StrategyParams(neighborhood_k=4, passes_t=5)
    a = query_mcfps(make_ctx(pool, 10, params=params))
    b = query_mcfps(make_ctx(pool, 10, params=params))
    assert_valid_batch(a, make_ctx(pool, 10, params=params))
    assert a.picks == b.picks
    assert [d.certainty for d in a.diagnostics] == [d.certainty for d in b.diagnostics]


def test_mcfps_threshold_one_returns_exact_budget():
    pool = blob_pool(classes=3, per_class=12)
    params = StrategyParams(
        neighborhood_k=5, passes_t=3, skip_threshold=1.0, refill_on_skip=False
    )
    ctx = make_ctx(pool, 9, params=params)
    batch = query_mcfps(ctx)
    assert len(batch.picks) == 9
    assert batch.skipped == []


def test_mcfps_zero_dropout_is_pass_count_invariant():
    pool = blob_pool()
    model = init_model(
        MlpConfig(
            input_dim=pool.dim,
            num_classes=pool.num_classes,
            hidden_dims=(16,),
            dropout_rate=0.0,
            weight_init_seed=3,
        )
    )
    p1 = StrategyParams(neighborhood_k=3, passes_t=1)
    p100 = StrategyParams(neighborhood_k=3, passes_t=100)
    a = query_mcfps(make_ctx(pool, 6, params=p1, model=model))
    b = query_mcfps(make_ctx(pool, 6, params=p100, model=model))
    assert a.picks == b.picks


def test_mcfps_k0_degenerates_to_fps_with_filter():
    pool = blob_pool()
    params = StrategyParams(neighborhood_k=0, passes_t=3, skip_threshold=1.0)
    ctx = make_ctx(pool, 6, params=params)
    batch = query_mcfps(ctx)
    fps_batch = query_fps(make_ctx(pool, 6))
    assert set(batch.picks) <= set(fps_batch.picks)
    assert len(batch.picks) == 6


def test_mcfps_skips_when_model_is_confident():
    # train to saturation on fully-covered separable data -> certainty ~ 1.0
    pool = blob_pool(classes=2, per_class=20, spread=0.15, separation=10.0)
    part = split_pool(pool, 0.2, seed=4)
    cfg = MlpConfig(
        input_dim=pool.dim,
        num_classes=2,
        hidden_dims=(16,),
        dropout_rate=0.1,
        learning_rate=0.2,
        epochs=300,
        batch_size=8,
        weight_init_seed=3,
    )
    labeled = part.unlabeled[::2]
    model = train(init_model(cfg), pool, labeled, seed=6)
    unlabeled = np.setdiff1d(part.unlabeled, labeled)
    partition = PoolPartition(labeled=labeled, unlabeled=unlabeled, test=part.test)
    params = StrategyParams(neighborhood_k=3, passes_t=10, skip_threshold=0.8)
    ctx = QueryContext(
        pool=pool, partition=partition, model=model, budget=4,
        params=params, round_seed=2, run_seed=1,
    )
    batch = query_mcfps(ctx)
    assert len(batch.skipped) >= 1
    loose = QueryContext(
        pool=pool, partition=partition, model=model, budget=4,
        params=StrategyParams(neighborhood_k=3, passes_t=10, skip_threshold=1.0),
        round_seed=2, run_seed=1,
    )
    assert query_mcfps(loose).skipped == []


def test_mcfps_refill_on_skip_draws_replacements():
    pool = blob_pool(classes=2, per_class=20, spread=0.15, separation=10.0)
    part = split_pool(pool, 0.2, seed=4)
    cfg = MlpConfig(
        input_dim=pool.dim, num_classes=2, hidden_dims=(16,), dropout_rate=0.1,
        learning_rate=0.2, epochs=300, batch_size=8, weight_init_seed=3,
    )
    labeled = part.unlabeled[::2]
    model = train(init_model(cfg), pool, labeled, seed=6)
    unlabeled = np.setdiff1d(part.unlabeled, labeled)
    partition = PoolPartition(labeled=labeled, unlabeled=unlabeled, test=part.test)
    base = dict(pool=pool, partition=partition, model=model, budget=4, round_seed=2, run_seed=1)
    no_refill = query_mcfps(QueryContext(
        params=StrategyParams(neighborhood_k=3, passes_t=10, skip_threshold=0.8), **base
    ))
    refill = query_mcfps(QueryContext(
        params=StrategyParams(
            neighborhood_k=3, passes_t=10, skip_threshold=0.8, refill_on_skip=True
        ),
        **base,
    ))
    # refilling keeps drawing seeds, so it examines at least as many
    assert len(refill.picks) + len(refill.skipped) >= len(no_refill.picks) + len(
        no_refill.skipped
    )
    assert len(no_refill.picks) + len(no_refill.skipped) == 4
