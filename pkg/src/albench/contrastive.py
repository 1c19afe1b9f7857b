"""Desk-scale contrastive learning: the NT-Xent loss over cosine
similarities, jitter/mask view augmentation for vectors, and a small
two-layer encoder trained with in-batch negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import EmbeddingPool, round_half_up
from .errors import ValidationError
from .rng import Rng, mix


@dataclass
class NtXentConfig:
    temperature: float = 0.5
    similarity: str = "cosine"

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValidationError("temperature must be positive")
        if self.similarity != "cosine":
            raise ValidationError("only cosine similarity is supported")


@dataclass
class ViewBatch:
    """Two augmented views per anchor, row-aligned."""

    anchors: np.ndarray
    view_a: np.ndarray
    view_b: np.ndarray
    aug_seed: int


@dataclass
class EncoderModel:
    """Two-layer ReLU encoder mapping raw vectors to a compact space."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if (norms == 0.0).any():
        raise ValidationError("NT-Xent is undefined for zero-norm embeddings")
    return z / norms[:, None], norms


def nt_xent_loss(embeddings: np.ndarray, cfg: NtXentConfig):
    """Mean NT-Xent loss over the 2N ordered view pairs.

    Rows are ordered [a_1..a_N, b_1..b_N]; row i is paired with row
    (i+N) mod 2N.  The denominator for row i sums exp(sim/tau) over every
    other row, positive partner included.
    Returns (loss, per_pair) with per_pair holding each row's term.
    """
    loss, per_pair, _ = nt_xent_grads(embeddings, cfg)
    return loss, per_pair


def nt_xent_grads(embeddings: np.ndarray, cfg: NtXentConfig):
    """NT-Xent loss, per-pair terms, and the gradient w.r.t. embeddings."""
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] % 2 != 0:
        raise ValidationError("embeddings must be a (2N, d) matrix")
    two_n = z.shape[0]
    n = two_n // 2
    if n < 2:
        raise ValidationError("NT-Xent needs N >= 2 anchors (no negatives otherwise)")
    u, norms = _normalize_rows(z)
    tau = cfg.temperature

    sims = u @ u.T
    partner = np.concatenate([np.arange(n, two_n), np.arange(n)])
    scaled = sims / tau
    np.fill_diagonal(scaled, -np.inf)  # indicator excludes only k = i
    row_max = scaled.max(axis=1, keepdims=True)
    exps = np.exp(scaled - row_max)
    denom = exps.sum(axis=1)
    log_denom = np.log(denom) + row_max[:, 0]
    pos = sims[np.arange(two_n), partner] / tau
    per_pair = log_denom - pos
    loss = float(per_pair.mean())

    # d(loss)/d(sims): softmax weights minus the positive indicator, per row.
    softmax = exps / denom[:, None]
    g = softmax / (tau * two_n)
    g[np.arange(two_n), partner] -= 1.0 / (tau * two_n)
    np.fill_diagonal(g, 0.0)
    grad_u = (g + g.T) @ u
    # back through row normalization: d(u)/d(z) = (I - u u^T) / ||z||
    inner = np.einsum("ij,ij->i", grad_u, u)
    grad_z = (grad_u - inner[:, None] * u) / norms[:, None]
    return loss, per_pair, grad_z


def augment(anchor, seed: int, jitter: float, mask_frac: float) -> np.ndarray:
    """Seeded Gaussian jitter plus zeroing a fraction of coordinates."""
    if jitter < 0.0:
        raise ValidationError("jitter must be >= 0")
    if not 0.0 <= mask_frac < 1.0:
        raise ValidationError("mask_frac must lie in [0, 1)")
    v = np.asarray(anchor, dtype=np.float64).copy()
    rng = Rng(mix(seed, "augment"))
    if jitter > 0.0:
        v += jitter * rng.normals(v.shape[0])
    n_mask = round_half_up(mask_frac * v.shape[0])
    if n_mask > 0:
        coords = rng.choose_prefix(list(range(v.shape[0])), n_mask)
        v[coords] = 0.0
    return v


def make_views(
    anchors: np.ndarray, seed: int, jitter: float, mask_frac: float
) -> ViewBatch:
    """Two independent augmented views of every anchor row."""
    anchors = np.asarray(anchors, dtype=np.float64)
    view_a = np.stack(
        [augment(row, mix(seed, "view-a", i), jitter, mask_frac) for i, row in enumerate(anchors)]
    )
    view_b = np.stack(
        [augment(row, mix(seed, "view-b", i), jitter, mask_frac) for i, row in enumerate(anchors)]
    )
    return ViewBatch(anchors=anchors, view_a=view_a, view_b=view_b, aug_seed=seed)


def init_encoder(in_dim: int, width: int, out_dim: int, seed: int) -> EncoderModel:
    if min(in_dim, width, out_dim) < 1:
        raise ValidationError("encoder dimensions must be >= 1")
    rng = Rng(mix(seed, "encoder-init"))
    w1 = rng.normals(in_dim * width).reshape(in_dim, width) * np.sqrt(2.0 / in_dim)
    w2 = rng.normals(width * out_dim).reshape(width, out_dim) * np.sqrt(2.0 / width)
    return EncoderModel(
        w1=w1, b1=np.zeros(width), w2=w2, b2=np.zeros(out_dim)
    )


def _encode_batch(enc: EncoderModel, x: np.ndarray):
    h = np.maximum(x @ enc.w1 + enc.b1, 0.0)
    return h, h @ enc.w2 + enc.b2


def batch_loss(enc: EncoderModel, views: ViewBatch, cfg: NtXentConfig) -> float:
    """NT-Xent loss of the encoder on one view batch (no update)."""
    stacked = np.concatenate([views.view_a, views.view_b], axis=0)
    _, z = _encode_batch(enc, stacked)
    loss, _, _ = nt_xent_grads(z, cfg)
    return loss


def train_encoder(
    raw: EmbeddingPool,
    width: int,
    out_dim: int,
    cfg: NtXentConfig,
    epochs: int,
    seed: int,
    learning_rate: float = 0.5,
    batch_size: int = 256,
    jitter: float = 0.1,
    mask_frac: float = 0.1,
) -> EncoderModel:
    """Gradient descent on the NT-Xent loss over seeded view batches.

    Labels in `raw` are ignored.  Trailing batches with a single anchor are
    dropped (a lone anchor has no negatives).
    """
    if raw.n < 4:
        raise ValidationError("encoder training needs at least 4 samples")
    enc = init_encoder(raw.dim, width, out_dim, mix(seed, "enc"))
    rng = Rng(mix(seed, "enc-train"))
    x_all = raw.features.astype(np.float64)
    order = np.arange(raw.n)
    batch_size = max(2, min(batch_size, raw.n))
    for epoch in range(epochs):
        rng.shuffle(order)
        for b, start in enumerate(range(0, raw.n, batch_size)):
            sel = order[start : start + batch_size]
            if sel.size < 2:
                continue
            views = make_views(
                x_all[sel], mix(seed, "views", epoch, b), jitter, mask_frac
            )
            stacked = np.concatenate([views.view_a, views.view_b], axis=0)
            h, z = _encode_batch(enc, stacked)
            _, _, grad_z = nt_xent_grads(z, cfg)
            grad_w2 = h.T @ grad_z
            grad_b2 = grad_z.sum(axis=0)
            dh = (grad_z @ enc.w2.T) * (h > 0.0)
            grad_w1 = stacked.T @ dh
            grad_b1 = dh.sum(axis=0)
            enc.w1 -= learning_rate * grad_w1
            enc.b1 -= learning_rate * grad_b1
            enc.w2 -= learning_rate * grad_w2
            enc.b2 -= learning_rate * grad_b2
    return enc


def encode(enc: EncoderModel, pool: EmbeddingPool) -> EmbeddingPool:
    """Map a pool through the encoder; labels carry over index-for-index."""
    if pool.dim != enc.in_dim:
        raise ValidationError(
            f"pool dim {pool.dim} does not match encoder input {enc.in_dim}"
        )
    _, z = _encode_batch(enc, pool.features.astype(np.float64))
    return EmbeddingPool(
        features=z.astype(np.float32),
        labels=None if pool.labels is None else pool.labels.copy(),
        num_classes=pool.num_classes,
    )
