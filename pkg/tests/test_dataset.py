"""Pools, the AEMB format, synthetic generation, imbalancing, splitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from albench.dataset import (
    EmbeddingPool,
    SyntheticSpec,
    apply_imbalance,
    gen_synthetic,
    load_pool,
    load_sidecar,
    round_half_up,
    save_pool,
    save_sidecar,
    split_pool,
)
from albench.errors import CorruptionError, FormatError, ValidationError
from oracles import nn1_accuracy


def small_pool(n=6, dim=3, classes=2, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, dim)).astype(np.float32)
    labels = np.arange(n) % classes
    return EmbeddingPool(features=feats, labels=labels, num_classes=classes)


# --- pool invariants ---


def test_pool_rejects_bad_shapes():
    with pytest.raises(ValidationError):
        EmbeddingPool(features=np.zeros((0, 3), dtype=np.float32))
    with pytest.raises(ValidationError):
        EmbeddingPool(features=np.zeros(5, dtype=np.float32))


def test_pool_rejects_label_out_of_range():
    with pytest.raises(ValidationError):
        EmbeddingPool(
            features=np.zeros((2, 2), dtype=np.float32),
            labels=np.array([0, 2]),
            num_classes=2,
        )


def test_unlabeled_pool_has_zero_classes():
    with pytest.raises(ValidationError):
        EmbeddingPool(features=np.zeros((2, 2), dtype=np.float32), num_classes=3)


# --- AEMB round trips ---


def test_round_trip_identity(tmp_path):
    pool = small_pool()
    path = tmp_path / "p.aemb"
    save_pool(pool, path)
    back = load_pool(path)
    assert back.n == pool.n and back.dim == pool.dim
    assert back.num_classes == pool.num_classes
    assert np.array_equal(back.features, pool.features)
    assert np.array_equal(back.labels, pool.labels)


def test_round_trip_unlabeled(tmp_path):
    pool = EmbeddingPool(features=np.ones((3, 2), dtype=np.float32))
    path = tmp_path / "u.aemb"
    save_pool(pool, path)
    back = load_pool(path)
    assert back.labels is None and back.num_classes == 0
    assert np.array_equal(back.features, pool.features)


def test_save_is_deterministic(tmp_path):
    pool = small_pool()
    p1, p2 = tmp_path / "a.aemb", tmp_path / "b.aemb"
    save_pool(pool, p1)
    save_pool(pool, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_minimal_unlabeled_file_is_14_plus_4_bytes(tmp_path):
    pool = EmbeddingPool(features=np.array([[1.5]], dtype=np.float32))
    path = tmp_path / "tiny.aemb"
    save_pool(pool, path)
    assert path.stat().st_size == 14 + 4


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "bad.aemb"
    pool = small_pool()
    save_pool(pool, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_pool(path)


def test_bad_version_is_format_error(tmp_path):
    path = tmp_path / "bad.aemb"
    save_pool(small_pool(), path)
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_pool(path)


def test_truncated_payload_is_corruption_error(tmp_path):
    # header says n=3, dim=2 (24 payload bytes) but only 20 are present
    import struct

    path = tmp_path / "trunc.aemb"
    header = struct.pack("<4sBIIB", b"AEMB", 1, 3, 2, 0)
    path.write_bytes(header + b"\x00" * 20)
    with pytest.raises(CorruptionError):
        load_pool(path)


def test_oversized_payload_is_corruption_error(tmp_path):
    path = tmp_path / "over.aemb"
    save_pool(EmbeddingPool(features=np.ones((1, 1), dtype=np.float32)), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CorruptionError):
        load_pool(path)


def test_label_beyond_num_classes_is_validation_error(tmp_path):
    import struct

    path = tmp_path / "lab.aemb"
    header = struct.pack("<4sBIIB", b"AEMB", 1, 1, 1, 1) + struct.pack("<I", 2)
    payload = struct.pack("<f", 0.0) + struct.pack("<H", 5)
    path.write_bytes(header + payload)
    with pytest.raises(ValidationError):
        load_pool(path)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 20),
    dim=st.integers(1, 8),
    labeled=st.booleans(),
    seed=st.integers(0, 2**32),
)
def test_round_trip_property(tmp_path_factory, n, dim, labeled, seed):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, dim)).astype(np.float32)
    labels = rng.integers(0, 4, size=n) if labeled else None
    pool = EmbeddingPool(features=feats, labels=labels, num_classes=4 if labeled else 0)
    path = tmp_path_factory.mktemp("rt") / "p.aemb"
    save_pool(pool, path)
    back = load_pool(path)
    assert np.array_equal(back.features, pool.features)
    if labeled:
        assert np.array_equal(back.labels, pool.labels)
    else:
        assert back.labels is None


def test_sidecar_roundtrip_and_absence(tmp_path):
    path = tmp_path / "p.aemb"
    save_pool(small_pool(), path)
    assert load_sidecar(path) is None
    save_sidecar(path, {"encoder": "toy", "classes": ["a", "b"]})
    assert load_sidecar(path)["encoder"] == "toy"


# --- synthetic generation ---


def test_gen_synthetic_is_seeded():
    spec = SyntheticSpec(classes=2, dim=2, per_class=3, seed=7)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_gen_synthetic_counts():
    pool = gen_synthetic(SyntheticSpec(classes=10, dim=4, per_class=100, seed=1))
    assert pool.n == 1000
    assert np.array_equal(pool.class_counts(), np.full(10, 100))


def test_gen_synthetic_centers_are_separated():
    spec = SyntheticSpec(
        classes=7, dim=3, per_class=30, spread=0.01, separation=10.0, seed=3
    )
    pool = gen_synthetic(spec)
    means = np.stack(
        [pool.features[pool.labels == c].mean(axis=0) for c in range(7)]
    )
    for i in range(7):
        for j in range(i + 1, 7):
            assert np.linalg.norm(means[i] - means[j]) >= 9.5


def test_gen_synthetic_tight_blobs_are_nn_separable():
    spec = SyntheticSpec(
        classes=3, dim=5, per_class=40, spread=0.01, separation=10.0, seed=11
    )
    pool = gen_synthetic(spec)
    part = split_pool(pool, 0.2, seed=5)
    acc = nn1_accuracy(
        pool.features[part.unlabeled],
        pool.labels[part.unlabeled],
        pool.features[part.test],
        pool.labels[part.test],
    )
    assert acc == 1.0


def test_gen_synthetic_validates_spec():
    with pytest.raises(ValidationError):
        SyntheticSpec(classes=1, dim=2, per_class=3)
    with pytest.raises(ValidationError):
        SyntheticSpec(classes=2, dim=2, per_class=3, spread=0.0)


# --- imbalancing ---


def test_imbalance_identity():
    pool = gen_synthetic(SyntheticSpec(classes=2, dim=2, per_class=10, seed=1))
    out = apply_imbalance(pool, [1.0, 1.0], seed=9)
    assert np.array_equal(out.features, pool.features)
    assert np.array_equal(out.labels, pool.labels)


def test_imbalance_counts():
    pool = gen_synthetic(SyntheticSpec(classes=2, dim=2, per_class=100, seed=1))
    out = apply_imbalance(pool, [1.0, 0.1], seed=9)
    assert np.array_equal(out.class_counts(), [100, 10])


def test_imbalance_preserves_order_and_vectors():
    pool = gen_synthetic(SyntheticSpec(classes=3, dim=4, per_class=50, seed=2))
    out = apply_imbalance(pool, [0.5, 0.8, 0.3], seed=4)
    assert out.dim == pool.dim and out.num_classes == pool.num_classes
    # every surviving row exists in the original, in the same relative order
    pos = 0
    for row, lab in zip(out.features, out.labels):
        while pos < pool.n and not (
            np.array_equal(pool.features[pos], row) and pool.labels[pos] == lab
        ):
            pos += 1
        assert pos < pool.n
        pos += 1


def test_imbalance_seeded_variants_differ():
    pool = gen_synthetic(SyntheticSpec(classes=2, dim=2, per_class=100, seed=1))
    variants = [apply_imbalance(pool, [0.5, 0.5], seed=s) for s in range(1, 5)]
    fingerprints = {v.features.tobytes() for v in variants}
    assert len(fingerprints) == 4


def test_imbalance_rejects_empty_class():
    pool = gen_synthetic(SyntheticSpec(classes=2, dim=2, per_class=4, seed=1))
    with pytest.raises(ValidationError):
        apply_imbalance(pool, [1.0, 0.1], seed=1)  # round(4*0.1) = 0


def test_imbalance_rejects_bad_retention():
    pool = gen_synthetic(SyntheticSpec(classes=2, dim=2, per_class=4, seed=1))
    with pytest.raises(ValidationError):
        apply_imbalance(pool, [1.0], seed=1)
    with pytest.raises(ValidationError):
        apply_imbalance(pool, [1.0, 1.5], seed=1)


# --- splitting ---


def test_split_counts_at_scale():
    pool = gen_synthetic(SyntheticSpec(classes=10, dim=2, per_class=2700, seed=1))
    part = split_pool(pool, 0.2, seed=3)
    assert len(part.test) == 5400
    assert len(part.unlabeled) == 21600
    assert len(part.labeled) == 0


def test_split_is_deterministic():
    pool = gen_synthetic(SyntheticSpec(classes=3, dim=2, per_class=30, seed=1))
    a = split_pool(pool, 0.2, seed=5)
    b = split_pool(pool, 0.2, seed=5)
    assert np.array_equal(a.test, b.test)
    assert np.array_equal(a.unlabeled, b.unlabeled)


def test_split_partitions_everything():
    pool = gen_synthetic(SyntheticSpec(classes=4, dim=3, per_class=25, seed=2))
    part = split_pool(pool, 0.3, seed=7)
    part.validate(pool.n)
    merged = np.sort(np.concatenate([part.labeled, part.unlabeled, part.test]))
    assert np.array_equal(merged, np.arange(pool.n))


def test_split_stratified_on_imbalanced_pool():
    pool = gen_synthetic(SyntheticSpec(classes=3, dim=2, per_class=100, seed=4))
    pool = apply_imbalance(pool, [1.0, 0.57, 0.23], seed=2)
    part = split_pool(pool, 0.2, seed=1)
    test_labels = pool.labels[part.test]
    for c, count in enumerate(pool.class_counts()):
        want = round_half_up(int(count) * 0.2)
        assert np.sum(test_labels == c) == want
        assert abs(want - 0.2 * int(count)) <= 0.5


def test_split_rejects_tiny_class():
    feats = np.zeros((3, 2), dtype=np.float32)
    pool = EmbeddingPool(features=feats, labels=[0, 0, 1], num_classes=2)
    with pytest.raises(ValidationError):
        split_pool(pool, 0.2, seed=1)


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.4999) == 1
    assert round_half_up(2.5) == 3
    assert round_half_up(-0.5) == 0
