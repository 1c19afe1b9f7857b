"""Embedding pools: the AEMB file format, synthetic generation, imbalancing
and stratified splitting.

AEMB is a little-endian flat binary format:

    magic  "AEMB"      4 bytes
    version u8 = 1     1 byte
    n       u32        4 bytes
    dim     u32        4 bytes
    has_labels u8      1 byte   -> 14-byte fixed header
    num_classes u32    only present when has_labels = 1
    features           n * dim float32, row-major
    labels             n * uint16, only present when has_labels = 1

An optional JSON sidecar ``<name>.meta.json`` may carry free-form
provenance; its absence is never an error.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError
from .rng import Rng, mix

AEMB_MAGIC = b"AEMB"
AEMB_VERSION = 1
_HEADER = struct.Struct("<4sBIIB")


def round_half_up(x: float) -> int:
    """The one rounding rule for fraction-derived counts."""
    return int(math.floor(x + 0.5))


@dataclass
class EmbeddingPool:
    """A flat pool of n feature vectors with optional integer labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int = 0

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ValidationError("features must be a 2-D (n, dim) matrix")
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValidationError("pool needs n >= 1 and dim >= 1")
        self.features = feats
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValidationError("labels length must equal n")
            if self.num_classes < 1:
                raise ValidationError("labeled pool needs num_classes >= 1")
            if labels.min() < 0 or labels.max() >= self.num_classes:
                raise ValidationError(
                    f"labels must lie in [0, {self.num_classes})"
                )
            self.labels = labels
        elif self.num_classes != 0:
            raise ValidationError("unlabeled pool must have num_classes = 0")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        if self.labels is None:
            raise ValidationError("pool has no labels")
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class PoolPartition:
    """Disjoint labeled / unlabeled / test index sets over one pool."""

    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.labeled = np.sort(np.asarray(self.labeled, dtype=np.int64))
        self.unlabeled = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        self.test = np.sort(np.asarray(self.test, dtype=np.int64))

    def validate(self, n: int) -> None:
        parts = [self.labeled, self.unlabeled, self.test]
        merged = np.concatenate(parts)
        if merged.size and (merged.min() < 0 or merged.max() >= n):
            raise ValidationError("partition indices out of range")
        if len(np.unique(merged)) != merged.size:
            raise ValidationError("partition sets overlap")

    def with_labeled(self, picks) -> "PoolPartition":
        """New partition with `picks` moved from unlabeled to labeled."""
        picks = np.asarray(picks, dtype=np.int64)
        if picks.size and not np.isin(picks, self.unlabeled).all():
            raise ValidationError("picks must come from the unlabeled set")
        return PoolPartition(
            labeled=np.concatenate([self.labeled, picks]),
            unlabeled=np.setdiff1d(self.unlabeled, picks),
            test=self.test,
        )


@dataclass
class SyntheticSpec:
    """Recipe for a separable Gaussian-blob pool."""

    classes: int
    dim: int
    per_class: int
    spread: float = 0.5
    separation: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.per_class < 1:
            raise ValidationError("need per_class >= 1")
        if self.dim < 1:
            raise ValidationError("need dim >= 1")
        if self.spread <= 0 or self.separation <= 0:
            raise ValidationError("spread and separation must be positive")


# --- AEMB I/O ----------------------------------------------------------------


def save_pool(pool: EmbeddingPool, path) -> None:
    """Write a pool as AEMB; equal pools produce identical bytes."""
    has_labels = pool.labels is not None
    if has_labels and pool.num_classes > 0xFFFF:
        raise ValidationError("AEMB stores labels as uint16")
    blob = bytearray()
    blob += _HEADER.pack(AEMB_MAGIC, AEMB_VERSION, pool.n, pool.dim, int(has_labels))
    if has_labels:
        blob += struct.pack("<I", pool.num_classes)
    blob += pool.features.astype("<f4", copy=False).tobytes(order="C")
    if has_labels:
        blob += pool.labels.astype("<u2").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_pool(path) -> EmbeddingPool:
    """Read an AEMB file back into a validated pool."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"{path}: file shorter than the AEMB header")
    magic, version, n, dim, has_labels = _HEADER.unpack_from(raw, 0)
    if magic != AEMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {AEMB_MAGIC!r}")
    if version != AEMB_VERSION:
        raise FormatError(f"{path}: unsupported AEMB version {version}")
    if has_labels not in (0, 1):
        raise FormatError(f"{path}: has_labels flag must be 0 or 1")
    offset = _HEADER.size
    num_classes = 0
    if has_labels:
        if len(raw) < offset + 4:
            raise CorruptionError(f"{path}: truncated num_classes field")
        (num_classes,) = struct.unpack_from("<I", raw, offset)
        offset += 4
    expected = n * dim * 4 + (n * 2 if has_labels else 0)
    payload = len(raw) - offset
    if payload != expected:
        raise CorruptionError(
            f"{path}: payload is {payload} bytes, header implies {expected}"
        )
    features = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=offset)
    features = features.reshape(n, dim).copy()
    labels = None
    if has_labels:
        labels = np.frombuffer(
            raw, dtype="<u2", count=n, offset=offset + n * dim * 4
        ).astype(np.int64)
    return EmbeddingPool(features=features, labels=labels, num_classes=num_classes)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def load_sidecar(path) -> dict | None:
    """Provenance sidecar for an AEMB file, or None when absent."""
    p = sidecar_path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text())


def save_sidecar(path, meta: dict) -> None:
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# --- generation and reshaping -------------------------------------------------


def _class_centers(rng: Rng, classes: int, dim: int, separation: float) -> np.ndarray:
    """Centers with pairwise distance >= separation for any dim >= 1.

    An orthonormal direction set (Gram-Schmidt over seeded Gaussians) is
    cycled with growing integer multipliers: same-direction pairs differ by
    a multiple of `separation`, cross-direction pairs by at least
    separation * sqrt(2).
    """
    n_dirs = min(classes, dim)
    basis = np.zeros((n_dirs, dim), dtype=np.float64)
    count = 0
    while count < n_dirs:
        v = rng.normals(dim)
        for b in basis[:count]:
            v -= (v @ b) * b
        norm = float(np.linalg.norm(v))
        if norm < 1e-9:  # essentially never; redraw keeps determinism
            continue
        basis[count] = v / norm
        count += 1
    centers = np.zeros((classes, dim), dtype=np.float64)
    for c in range(classes):
        centers[c] = basis[c % n_dirs] * (separation * (1 + c // n_dirs))
    return centers


def gen_synthetic(spec: SyntheticSpec) -> EmbeddingPool:
    """Seeded Gaussian blobs around well-separated class centers."""
    rng = Rng(mix(spec.seed, "gen-synthetic"))
    centers = _class_centers(rng, spec.classes, spec.dim, spec.separation)
    n = spec.classes * spec.per_class
    features = np.empty((n, spec.dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for c in range(spec.classes):
        block = rng.normals(spec.per_class * spec.dim)
        block = block.reshape(spec.per_class, spec.dim) * spec.spread
        rows = slice(c * spec.per_class, (c + 1) * spec.per_class)
        features[rows] = centers[c] + block
        labels[rows] = c
    return EmbeddingPool(
        features=features.astype(np.float32), labels=labels, num_classes=spec.classes
    )


def apply_imbalance(pool: EmbeddingPool, retention, seed: int) -> EmbeddingPool:
    """Keep round(count_c * retention_c) samples per class, seeded uniformly.

    Surviving samples keep their relative order; feature vectors are
    untouched.
    """
    if pool.labels is None:
        raise ValidationError("apply_imbalance needs a labeled pool")
    retention = [float(r) for r in retention]
    if len(retention) != pool.num_classes:
        raise ValidationError(
            f"retention needs {pool.num_classes} fractions, got {len(retention)}"
        )
    if any(not 0.0 < r <= 1.0 for r in retention):
        raise ValidationError("retention fractions must lie in (0, 1]")
    rng = Rng(mix(seed, "imbalance"))
    counts = pool.class_counts()
    keep: list[int] = []
    for c in range(pool.num_classes):
        idxs = np.flatnonzero(pool.labels == c)
        target = round_half_up(int(counts[c]) * retention[c])
        if target < 1:
            raise ValidationError(f"class {c} would be reduced to 0 samples")
        keep.extend(rng.choose_prefix(idxs.tolist(), target))
    keep_sorted = np.sort(np.asarray(keep, dtype=np.int64))
    return EmbeddingPool(
        features=pool.features[keep_sorted].copy(),
        labels=pool.labels[keep_sorted].copy(),
        num_classes=pool.num_classes,
    )


def split_pool(pool: EmbeddingPool, test_fraction: float, seed: int) -> PoolPartition:
    """Stratified test split; everything else starts unlabeled."""
    if pool.labels is None:
        raise ValidationError("split_pool needs a labeled pool")
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie in (0, 1)")
    counts = pool.class_counts()
    if (counts < 2).any():
        bad = int(np.argmin(counts))
        raise ValidationError(f"class {bad} has fewer than 2 samples")
    rng = Rng(mix(seed, "split"))
    test: list[int] = []
    for c in range(pool.num_classes):
        idxs = np.flatnonzero(pool.labels == c)
        target = round_half_up(int(counts[c]) * test_fraction)
        test.extend(rng.choose_prefix(idxs.tolist(), target))
    test_arr = np.sort(np.asarray(test, dtype=np.int64))
    rest = np.setdiff1d(np.arange(pool.n, dtype=np.int64), test_arr)
    return PoolPartition(
        labeled=np.empty(0, dtype=np.int64), unlabeled=rest, test=test_arr
    )
