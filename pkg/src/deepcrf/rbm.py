"""Greedy layer-wise pretraining with binary-binary RBMs and one-step
contrastive divergence.

Each layer of the encoder is initialized from an RBM trained on the previous
layer's hidden probabilities (probabilities, not samples, propagate between
layers).  CD-1 samples binary hidden states for the single Gibbs
reconstruction but uses probabilities in both correlation terms, so a run is
fully determined by (data order, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import logistic


@dataclass
class Rbm:
    """weights: (n_visible, n_hidden); biases sized to match."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        nv, nh = self.weights.shape
        if self.visible_bias.shape != (nv,) or self.hidden_bias.shape != (nh,):
            raise ValueError("bias shapes inconsistent with weight matrix")
        if not all(np.all(np.isfinite(p)) for p in
                   (self.weights, self.visible_bias, self.hidden_bias)):
            raise ValueError("non-finite RBM parameters")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]


@dataclass
class PretrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def hidden_probs(rbm: Rbm, v) -> np.ndarray:
    """sigma(W^T v + hidden_bias); accepts a vector or a (B, n_visible) batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != rbm.n_visible:
        raise ValueError(f"visible dimension {v.shape[-1]} != {rbm.n_visible}")
    return logistic(v @ rbm.weights + rbm.hidden_bias)


def visible_probs(rbm: Rbm, h) -> np.ndarray:
    """sigma(W h + visible_bias); accepts a vector or a (B, n_hidden) batch."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != rbm.n_hidden:
        raise ValueError(f"hidden dimension {h.shape[-1]} != {rbm.n_hidden}")
    return logistic(h @ rbm.weights.T + rbm.visible_bias)


def cd1_step(rbm: Rbm, batch, lr: float, rng: np.random.Generator) -> Rbm:
    """One CD-1 update, in place, averaged over the batch.

    positive phase: h+ = p(h | v)
    reconstruction: s ~ Bernoulli(h+), v- = p(v | s), h- = p(h | v-)
    dW = <v h+^T> - <v- h-^T>, biases analogously.

    One uniform vector is drawn per call and shared by every example in the
    batch (still a valid Bernoulli(h+) draw per example), so a batch of
    identical vectors produces exactly the single-vector update and the rng
    consumption does not depend on batch size.
    """
    V = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if V.shape[1] != rbm.n_visible:
        raise ValueError(f"batch vectors have dimension {V.shape[1]}, expected {rbm.n_visible}")
    B = V.shape[0]
    h_pos = hidden_probs(rbm, V)
    u = rng.random(rbm.n_hidden)
    h_samples = (u[None, :] < h_pos).astype(np.float64)
    v_neg = visible_probs(rbm, h_samples)
    h_neg = hidden_probs(rbm, v_neg)

    dW = (V.T @ h_pos - v_neg.T @ h_neg) / B
    dvb = (V - v_neg).mean(axis=0)
    dhb = (h_pos - h_neg).mean(axis=0)
    if not (np.isfinite(dW.sum()) and np.isfinite(dvb.sum()) and np.isfinite(dhb.sum())):
        raise FloatingPointError("non-finite CD-1 update")
    rbm.weights += lr * dW
    rbm.visible_bias += lr * dvb
    rbm.hidden_bias += lr * dhb
    return rbm


def reconstruction_cross_entropy(rbm: Rbm, data) -> float:
    """Mean cross-entropy between the data and its deterministic one-step
    reconstruction p(v | p(h | v)); the monitoring metric for pretraining."""
    V = np.atleast_2d(np.asarray(data, dtype=np.float64))
    p = visible_probs(rbm, hidden_probs(rbm, V))
    ce = -(V * np.log(p) + (1.0 - V) * np.log(1.0 - p)).sum(axis=1)
    return float(ce.mean())


def train_rbm(data, n_hidden: int, cfg: PretrainConfig,
              rng: np.random.Generator | None = None) -> tuple[Rbm, list[float]]:
    """Train one RBM with CD-1; returns the model and the per-epoch mean
    reconstruction cross-entropy (measured after each epoch)."""
    V = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if V.shape[0] == 0:
        raise ValueError("empty training data")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_visible = V.shape[1]
    rbm = Rbm(
        weights=rng.standard_normal((n_visible, n_hidden)) * 0.01,
        visible_bias=np.zeros(n_visible),
        hidden_bias=np.zeros(n_hidden),
    )
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(V.shape[0])
        for start in range(0, V.shape[0], cfg.batch_size):
            batch = V[order[start:start + cfg.batch_size]]
            cd1_step(rbm, batch, cfg.learning_rate, rng)
        history.append(reconstruction_cross_entropy(rbm, V))
    return rbm, history


def pretrain_stack(data, layer_sizes: list[int],
                   cfg: PretrainConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Greedy bottom-up pretraining.

    Trains one RBM per entry of layer_sizes, each on the previous RBM's hidden
    probabilities, and returns (weights, hidden_bias) pairs ready to seed an
    EncoderStack.  Visible biases are dropped: the encoder has no use for them.
    """
    V = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if V.shape[0] == 0:
        raise ValueError("empty training data")
    if not layer_sizes:
        raise ValueError("layer_sizes must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    layers = []
    for n_hidden in layer_sizes:
        rbm, _ = train_rbm(V, n_hidden, cfg, rng)
        layers.append((rbm.weights, rbm.hidden_bias))
        V = hidden_probs(rbm, V)
    return layers
