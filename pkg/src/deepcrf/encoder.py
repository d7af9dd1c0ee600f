"""Stacked logistic encoder mapping raw frames to latent features.

The encoder is the composition of logistic layers h = f_{L-1}(...f_1(x));
each layer computes sigma(W^T a + b).  It supports exact backpropagation and
in-place SGD updates with an L1 subgradient penalty on the weights (biases
are exempt from the penalty; sign(0) is taken as 0 so an exactly-zero weight
feels no regularization force).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Strict open interval (0, 1): the stable branch form avoids overflow and the
# clip keeps extreme-|z| outputs away from exactly 0.0 / 1.0.
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def logistic(z: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise sigmoid, output strictly inside (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _P_LO, _P_HI)


@dataclass
class EncoderStack:
    """Ordered (weights, bias) pairs; weights[l] has shape (n_in, n_out).

    An empty stack is the identity encoder (latent features = raw frames),
    which is how the linear-CRF baseline is wired.
    """

    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        coerced = []
        for i, (W, b) in enumerate(self.layers):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weights {W.shape} and bias {b.shape} inconsistent")
            if coerced and W.shape[0] != coerced[-1][0].shape[1]:
                raise ValueError(
                    f"layer {i} input dim {W.shape[0]} != layer {i-1} output dim "
                    f"{coerced[-1][0].shape[1]}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
            coerced.append((W, b))
        self.layers = coerced

    @property
    def L_minus_1(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int | None:
        return self.layers[0][0].shape[0] if self.layers else None

    def output_dim(self, d: int) -> int:
        """Latent dimension for input dimension d (= d for the empty stack)."""
        return self.layers[-1][0].shape[1] if self.layers else d

    def copy(self) -> "EncoderStack":
        return EncoderStack([(W.copy(), b.copy()) for W, b in self.layers])


@dataclass
class ForwardTrace:
    """Per-layer activations cached for backprop; activations[0] is the input
    frame and activations[-1] the encoder output."""

    activations: list[np.ndarray]


def encode(enc: EncoderStack, x) -> tuple[np.ndarray, ForwardTrace]:
    """Run one frame through the stack, returning (h, trace)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"frame must be a vector, got shape {a.shape}")
    if enc.layers and a.shape[0] != enc.input_dim:
        raise ValueError(f"frame dimension {a.shape[0]} != encoder input {enc.input_dim}")
    activations = [a]
    for W, b in enc.layers:
        z = a @ W + b
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite pre-activation in encoder")
        a = logistic(z)
        activations.append(a)
    return a, ForwardTrace(activations)


def encode_sequence(enc: EncoderStack, frames) -> list[tuple[np.ndarray, ForwardTrace]]:
    """Elementwise encode over the frames of one sequence.

    Frames are encoded one by one (not batched) so each result is bitwise
    identical to an independent encode() call.
    """
    return [encode(enc, f) for f in frames]


def backprop(enc: EncoderStack, trace: ForwardTrace, dL_dh) -> list[tuple[np.ndarray, np.ndarray]]:
    """Chain-rule gradients of a scalar loss through the stack.

    dL_dh is the loss gradient at the encoder output; the logistic derivative
    is a * (1 - a) using the cached activations.  Returns per-layer
    (dL_dW, dL_db) in layer order; carries whatever sign convention dL_dh has.
    """
    if len(trace.activations) != len(enc.layers) + 1:
        raise ValueError("trace does not match encoder depth")
    delta = np.asarray(dL_dh, dtype=np.float64)
    if enc.layers and delta.shape != (enc.layers[-1][0].shape[1],):
        raise ValueError(f"dL_dh shape {delta.shape} does not match encoder output")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(enc.layers)
    for l in range(len(enc.layers) - 1, -1, -1):
        W, _ = enc.layers[l]
        a_out = trace.activations[l + 1]
        a_in = trace.activations[l]
        dz = delta * a_out * (1.0 - a_out)
        grads[l] = (np.outer(a_in, dz), dz)
        delta = W @ dz
    return grads


def sgd_step(enc: EncoderStack, grads, lr, lambda3: float) -> EncoderStack:
    """In-place descent step W -= lr * (grad + lambda3 * sign(W)); biases skip
    the L1 term.  np.sign(0) == 0, so exactly-zero weights feel no penalty.
    lr may be a scalar or a per-layer sequence of step sizes."""
    if len(grads) != len(enc.layers):
        raise ValueError("gradient list does not match encoder depth")
    rates = list(lr) if np.ndim(lr) else [float(lr)] * len(enc.layers)
    if len(rates) != len(enc.layers):
        raise ValueError("per-layer step list does not match encoder depth")
    for (W, b), (gW, gb), eta in zip(enc.layers, grads, rates):
        if gW.shape != W.shape or gb.shape != b.shape:
            raise ValueError("gradient shape mismatch")
        W -= eta * (gW + lambda3 * np.sign(W))
        b -= eta * gb
        if not (np.isfinite(W.sum()) and np.isfinite(b.sum())):
            raise FloatingPointError("non-finite encoder parameters after update")
    return enc
