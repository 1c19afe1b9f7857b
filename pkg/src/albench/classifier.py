"""Feed-forward softmax classifier with inverted dropout and MC-Dropout
multi-pass uncertainty.

Weights are float64, trained by plain mini-batch SGD with He
initialization from the fixed PRNG; every stochastic choice (init,
shuffling, dropout masks) is seeded, so identical seeds give bit-identical
models.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import EmbeddingPool
from .errors import CorruptionError, FormatError, ValidationError
from .rng import Rng, mix

AMLP_MAGIC = b"AMLP"
AMLP_VERSION = 1


@dataclass
class MlpConfig:
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (128,)
    dropout_rate: float = 0.3
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    weight_init_seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.learning_rate <= 0.0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValidationError("hidden widths must be >= 1")

    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.num_classes]


@dataclass
class MlpModel:
    config: MlpConfig
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "MlpModel":
        return MlpModel(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class UncertaintyMatrix:
    """t softmax rows plus their mean and derived certainty scalar."""

    passes: int
    probs: np.ndarray
    mean: np.ndarray
    certainty: float
    uncertainty: float


def init_model(config: MlpConfig) -> MlpModel:
    """He-initialized weights, zero biases, seeded by weight_init_seed."""
    rng = Rng(mix(config.weight_init_seed, "he-init"))
    dims = config.layer_dims()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normals(fan_in * fan_out).reshape(fan_in, fan_out) * scale)
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpModel(config=config, weights=weights, biases=biases)


def _make_masks(config: MlpConfig, batch: int, rng: Rng) -> list[np.ndarray]:
    """Inverted-dropout masks, one per hidden layer, scaled by 1/(1-p)."""
    rate = config.dropout_rate
    keep = 1.0 - rate
    masks = []
    for width in config.hidden_dims:
        u = rng.uniforms(batch * width).reshape(batch, width)
        masks.append((u >= rate).astype(np.float64) / keep)
    return masks


def _forward(model: MlpModel, x: np.ndarray, masks: list[np.ndarray] | None):
    """Hidden activations (post-dropout) and logits for a (B, d) batch."""
    hidden = []
    h = x
    n_hidden = len(model.config.hidden_dims)
    for layer in range(n_hidden):
        h = np.maximum(h @ model.weights[layer] + model.biases[layer], 0.0)
        if masks is not None:
            h = h * masks[layer]
        hidden.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return hidden, logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    masks: list[np.ndarray] | None = None,
):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    batch = x.shape[0]
    hidden, logits = _forward(model, x, masks)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(batch), y]))

    probs = _softmax(logits)
    dlogits = probs
    dlogits[np.arange(batch), y] -= 1.0
    dlogits /= batch

    grads_w = [np.empty(0)] * len(model.weights)
    grads_b = [np.empty(0)] * len(model.biases)
    delta = dlogits
    for layer in range(len(model.weights) - 1, -1, -1):
        below = hidden[layer - 1] if layer > 0 else x
        grads_w[layer] = below.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer].T
            if masks is not None:
                delta = delta * masks[layer - 1]
            delta = delta * (hidden[layer - 1] > 0.0)
    return loss, grads_w, grads_b


def train(
    model: MlpModel, pool: EmbeddingPool, train_indices, seed: int
) -> MlpModel:
    """Shuffled mini-batch SGD on cross-entropy with dropout active.

    Returns a new model; the input model is untouched (epochs=0 returns it
    as-is).
    """
    if pool.labels is None:
        raise ValidationError("training needs a labeled pool")
    idx = np.asarray(train_indices, dtype=np.int64)
    if idx.size < 1:
        raise ValidationError("training needs at least one sample")
    if idx.min() < 0 or idx.max() >= pool.n:
        raise ValidationError("train index out of range")
    cfg = model.config
    if cfg.epochs == 0:
        return model
    out = model.copy()
    rng = Rng(mix(seed, "train"))
    x_all = pool.features[idx].astype(np.float64)
    y_all = pool.labels[idx]
    order = np.arange(idx.size)
    use_dropout = cfg.dropout_rate > 0.0
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        for start in range(0, idx.size, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            xb, yb = x_all[sel], y_all[sel]
            masks = _make_masks(cfg, xb.shape[0], rng) if use_dropout else None
            _, grads_w, grads_b = loss_and_grads(out, xb, yb, masks)
            for layer in range(len(out.weights)):
                out.weights[layer] -= cfg.learning_rate * grads_w[layer]
                out.biases[layer] -= cfg.learning_rate * grads_b[layer]
    return out


def predict_proba(
    model: MlpModel, x, dropout_active: bool = False, mask_seed: int = 0
) -> np.ndarray:
    """Softmax output for one vector; deterministic when dropout is off."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.config.input_dim:
        raise ValidationError(
            f"input has dim {x.shape[0]}, model expects {model.config.input_dim}"
        )
    masks = None
    if dropout_active and model.config.dropout_rate > 0.0:
        masks = _make_masks(model.config, 1, Rng(mix(mask_seed, "predict")))
    _, logits = _forward(model, x[None, :], masks)
    return _softmax(logits)[0]


def predict_proba_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Dropout-off softmax outputs for a (B, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.config.input_dim:
        raise ValidationError("batch feature dimension mismatch")
    _, logits = _forward(model, x, None)
    return _softmax(logits)


def mc_dropout(model: MlpModel, x, t: int, seed: int) -> UncertaintyMatrix:
    """t stochastic forward passes with independent per-pass mask seeds."""
    if t < 1:
        raise ValidationError("mc_dropout needs t >= 1")
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.config.input_dim:
        raise ValidationError("input dimension mismatch")
    cfg = model.config
    if cfg.dropout_rate > 0.0:
        per_pass = [_make_masks(cfg, 1, Rng(mix(seed, "mc-pass", p))) for p in range(t)]
        masks = [
            np.concatenate([pm[layer] for pm in per_pass], axis=0)
            for layer in range(len(cfg.hidden_dims))
        ]
    else:
        masks = None
    batch = np.broadcast_to(x, (t, x.shape[0]))
    _, logits = _forward(model, batch, masks)
    probs = _softmax(logits)
    mean = probs.mean(axis=0)
    certainty = float(mean.max())
    return UncertaintyMatrix(
        passes=t,
        probs=probs,
        mean=mean,
        certainty=certainty,
        uncertainty=1.0 - certainty,
    )


def evaluate_accuracy(model: MlpModel, pool: EmbeddingPool, test_indices) -> float:
    """Fraction of argmax predictions matching the true labels."""
    if pool.labels is None:
        raise ValidationError("evaluation needs a labeled pool")
    idx = np.asarray(test_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("test set is empty")
    probs = predict_proba_batch(model, pool.features[idx].astype(np.float64))
    preds = np.argmax(probs, axis=1)
    return float(np.mean(preds == pool.labels[idx]))


# --- AMLP checkpoints ---------------------------------------------------------


def save_model(model: MlpModel, path) -> None:
    """Little-endian checkpoint: config header followed by weight tensors."""
    cfg = model.config
    blob = bytearray()
    blob += AMLP_MAGIC
    blob += struct.pack("<B", AMLP_VERSION)
    blob += struct.pack(
        "<III", cfg.input_dim, cfg.num_classes, len(cfg.hidden_dims)
    )
    blob += struct.pack(f"<{len(cfg.hidden_dims)}I", *cfg.hidden_dims)
    blob += struct.pack(
        "<ddIIQ",
        cfg.dropout_rate,
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.weight_init_seed,
    )
    for w, b in zip(model.weights, model.biases):
        blob += w.astype("<f8").tobytes(order="C")
        blob += b.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_model(path) -> MlpModel:
    raw = Path(path).read_bytes()
    if len(raw) < 5 or raw[:4] != AMLP_MAGIC:
        raise FormatError(f"{path}: not an AMLP checkpoint")
    if raw[4] != AMLP_VERSION:
        raise FormatError(f"{path}: unsupported AMLP version {raw[4]}")
    offset = 5
    input_dim, num_classes, n_hidden = struct.unpack_from("<III", raw, offset)
    offset += 12
    hidden = struct.unpack_from(f"<{n_hidden}I", raw, offset)
    offset += 4 * n_hidden
    dropout, lr, epochs, batch, seed = struct.unpack_from("<ddIIQ", raw, offset)
    offset += struct.calcsize("<ddIIQ")
    cfg = MlpConfig(
        input_dim=input_dim,
        num_classes=num_classes,
        hidden_dims=hidden,
        dropout_rate=dropout,
        learning_rate=lr,
        epochs=epochs,
        batch_size=batch,
        weight_init_seed=seed,
    )
    dims = cfg.layer_dims()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        need = fan_in * fan_out * 8
        if offset + need + fan_out * 8 > len(raw):
            raise CorruptionError(f"{path}: truncated weight tensors")
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += need
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += fan_out * 8
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(raw):
        raise CorruptionError(f"{path}: trailing bytes after weight tensors")
    return MlpModel(config=cfg, weights=weights, biases=biases)


def with_weight_seed(cfg: MlpConfig, seed: int) -> MlpConfig:
    return replace(cfg, weight_init_seed=seed)
