"""Desk-scale learner: softmax classifier plus a normalized auxiliary projection head.

The main head classifies shared features; the auxiliary head projects them to a
narrow embedding, L2-normalizes each row, and classifies through that
bottleneck, so training shapes a unit-sphere embedding the selection engine can
hash. Total loss is main cross-entropy plus lambda_aux times the auxiliary
cross-entropy. An optional one-hidden-layer tanh trunk makes the two heads
share parameters; after stop_epoch the auxiliary gradient no longer flows into
the shared trunk (the heads' own parameters keep learning).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DivergenceError, FeatureMatrix, Rng
from .selection import UncertaintyScores

UNCERTAINTY_ENTROPY = "entropy"
UNCERTAINTY_LOSS_PROXY = "loss-proxy"


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int
    reduced_dim: int = 16
    hidden: int | None = None
    lambda_aux: float = 1.0
    epochs: int = 24
    stop_epoch: int | None = None  # None -> 60% of epochs
    batch_size: int = 64
    learning_rate: float = 0.32
    lr_decay: bool = True

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.reduced_dim < 1:
            raise ValueError("reduced_dim must be positive")
        if self.lambda_aux < 0:
            raise ValueError("lambda_aux must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.stop_epoch is not None and not 0 <= self.stop_epoch <= self.epochs:
            raise ValueError("stop_epoch must lie in [0, epochs]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @property
    def effective_stop_epoch(self) -> int:
        if self.stop_epoch is not None:
            return self.stop_epoch
        return int(round(0.6 * self.epochs))


@dataclass
class ToyModel:
    config: ModelConfig
    rng: Rng
    params: dict
    epoch_losses: list | None = None


@dataclass
class ModelOutputs:
    """Forward-pass products: class probabilities, unit-norm embeddings, entropy, per-sample loss."""

    probs: np.ndarray
    embeddings: np.ndarray
    entropy: np.ndarray
    loss_per_sample: np.ndarray | None = None

    def embedding_matrix(self) -> FeatureMatrix:
        return FeatureMatrix(self.embeddings, unit_norm=True)


def init_model(config: ModelConfig, n_features: int, rng: Rng) -> ToyModel:
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights from the "init" stream, zero biases."""
    shared_dim = config.hidden if config.hidden is not None else n_features
    if not config.reduced_dim < shared_dim:
        raise ValueError(
            f"reduced_dim {config.reduced_dim} must be smaller than the shared width {shared_dim}"
        )
    gen = rng.derive("init").generator()

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return gen.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    if config.hidden is not None:
        params["trunk_w"] = uniform(n_features, (n_features, config.hidden))
        params["trunk_b"] = np.zeros(config.hidden)
    params["main_w"] = uniform(shared_dim, (shared_dim, config.n_classes))
    params["main_b"] = np.zeros(config.n_classes)
    params["proj_w"] = uniform(shared_dim, (shared_dim, config.reduced_dim))
    params["aux_w"] = uniform(config.reduced_dim, (config.reduced_dim, config.n_classes))
    params["aux_b"] = np.zeros(config.n_classes)
    return ToyModel(config=config, rng=rng, params=params)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward(params: dict, X: np.ndarray, hidden: bool):
    """Returns (trunk output, main logits, pre-norm projection, unit embeddings, aux logits)."""
    if hidden:
        T = np.tanh(X @ params["trunk_w"] + params["trunk_b"])
    else:
        T = X
    logits_main = T @ params["main_w"] + params["main_b"]
    U = T @ params["proj_w"]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    # A projection without a usable direction (zero norm, or a norm that
    # overflowed) parks on the first axis so the embedding stays exactly
    # unit-norm.
    bad = ~np.isfinite(norms) | (norms == 0.0)
    safe = np.where(bad, 1.0, norms)
    Z = U / safe
    bad_rows = bad.ravel()
    if np.any(bad_rows):
        Z[bad_rows, :] = 0.0
        Z[bad_rows, 0] = 1.0
    logits_aux = Z @ params["aux_w"] + params["aux_b"]
    return T, logits_main, U, Z, logits_aux


def loss_and_grads(
    params: dict,
    X: np.ndarray,
    y: np.ndarray,
    lambda_aux: float,
    hidden: bool,
    aux_to_trunk: bool,
):
    """Combined cross-entropy and its analytic gradients for one batch.

    aux_to_trunk=False cuts the auxiliary gradient path into the shared trunk
    (the gradient stop); the auxiliary head's own parameters always learn.
    """
    B = X.shape[0]
    T, logits_main, U, Z, logits_aux = _forward(params, X, hidden)
    n_classes = logits_main.shape[1]
    Y = np.zeros((B, n_classes))
    Y[np.arange(B), y] = 1.0
    log_p_main = _log_softmax(logits_main)
    log_p_aux = _log_softmax(logits_aux)
    loss_main = -log_p_main[np.arange(B), y].mean()
    loss_aux = -log_p_aux[np.arange(B), y].mean()
    loss = loss_main + lambda_aux * loss_aux

    grads: dict[str, np.ndarray] = {}
    G_main = (np.exp(log_p_main) - Y) / B
    grads["main_w"] = T.T @ G_main
    grads["main_b"] = G_main.sum(axis=0)
    G_aux = lambda_aux * (np.exp(log_p_aux) - Y) / B
    grads["aux_w"] = Z.T @ G_aux
    grads["aux_b"] = G_aux.sum(axis=0)
    G_z = G_aux @ params["aux_w"].T
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    bad = ~np.isfinite(norms) | (norms == 0.0)
    safe = np.where(bad, 1.0, norms)
    # d(u/|u|) pulls out the radial component: (g - z <g,z>) / |u|.
    G_u = (G_z - Z * (G_z * Z).sum(axis=1, keepdims=True)) / safe
    G_u[bad.ravel(), :] = 0.0
    grads["proj_w"] = T.T @ G_u
    if hidden:
        G_T = G_main @ params["main_w"].T
        if aux_to_trunk:
            G_T = G_T + G_u @ params["proj_w"].T
        G_pre = G_T * (1.0 - T * T)
        grads["trunk_w"] = X.T @ G_pre
        grads["trunk_b"] = G_pre.sum(axis=0)
    return loss, grads


def train(
    model: ToyModel,
    features: FeatureMatrix,
    labels: np.ndarray,
    labeled_indices,
) -> ToyModel:
    """Mini-batch gradient descent on the labeled subset.

    Shuffles per epoch from the "batch" stream, decays the learning rate by
    10x at 80% of epochs when lr_decay is set, and applies the gradient stop
    after effective_stop_epoch. Returns a new model; raises DivergenceError on
    a non-finite loss.
    """
    cfg = model.config
    lab = np.asarray(labeled_indices, np.int64)
    if lab.size == 0:
        raise ValueError("cannot train on an empty labeled set")
    y = np.asarray(labels, np.int64)[lab]
    if y.min() < 0 or y.max() >= cfg.n_classes:
        raise ValueError("labels out of range for configured class count")
    X = features.data[lab]
    params = {k: v.copy() for k, v in model.params.items()}
    hidden = cfg.hidden is not None
    gen = model.rng.derive("batch").generator()
    lr = cfg.learning_rate
    decay_at = int(np.floor(0.8 * cfg.epochs))
    stop = cfg.effective_stop_epoch
    epoch_losses = []
    for epoch in range(cfg.epochs):
        if cfg.lr_decay and cfg.epochs > 1 and epoch == decay_at:
            lr *= 0.1
        perm = gen.permutation(lab.size)
        batch_losses = []
        for start in range(0, lab.size, cfg.batch_size):
            sel = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(
                params, X[sel], y[sel], cfg.lambda_aux, hidden, aux_to_trunk=epoch < stop
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} (lr={lr})", epoch=epoch, learning_rate=lr
                )
            for k, g in grads.items():
                params[k] -= lr * g
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    return ToyModel(config=cfg, rng=model.rng, params=params, epoch_losses=epoch_losses)


def infer(model: ToyModel, features: FeatureMatrix, labels=None) -> ModelOutputs:
    """Forward pass over all rows; per-sample loss only when labels are given."""
    cfg = model.config
    _, logits_main, _, Z, _ = _forward(model.params, features.data, cfg.hidden is not None)
    log_p = _log_softmax(logits_main)
    probs = np.exp(log_p)
    entropy = -(probs * np.where(probs > 0.0, log_p, 0.0)).sum(axis=1)
    loss_per_sample = None
    if labels is not None:
        y = np.asarray(labels, np.int64)
        if y.shape[0] != features.n:
            raise ValueError("labels must align with features")
        loss_per_sample = -log_p[np.arange(features.n), y]
    return ModelOutputs(probs=probs, embeddings=Z, entropy=entropy, loss_per_sample=loss_per_sample)


def uncertainty(outputs: ModelOutputs, kind: str = UNCERTAINTY_ENTROPY) -> UncertaintyScores:
    """Per-sample uncertainty; higher = more uncertain.

    "entropy" is predictive entropy in nats; "loss-proxy" is one minus the
    top-two probability margin, a label-free stand-in for loss.
    """
    if kind == UNCERTAINTY_ENTROPY:
        return UncertaintyScores(scores=outputs.entropy, source=UNCERTAINTY_ENTROPY)
    if kind == UNCERTAINTY_LOSS_PROXY:
        part = np.sort(outputs.probs, axis=1)
        margin = part[:, -1] - part[:, -2]
        return UncertaintyScores(scores=1.0 - margin, source=UNCERTAINTY_LOSS_PROXY)
    raise ValueError(f"unknown uncertainty kind {kind!r}")
