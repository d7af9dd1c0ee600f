"""Greedy RBM pretraining on synthetic stripe patterns.

Trains a single binary RBM with CD-1 and prints the reconstruction
cross-entropy after each epoch (it should fall), then stacks three RBMs
greedily and shows the weight shapes that seed the encoder.
"""

import numpy as np

from deepcrf import PretrainConfig, pretrain_stack
from deepcrf.rbm import train_rbm

rng = np.random.default_rng(3)
n, d = 300, 24

# each example is a few random contiguous runs of ones
data = np.zeros((n, d))
for i in range(n):
    for _ in range(rng.integers(1, 4)):
        start = rng.integers(0, d)
        data[i, start:start + rng.integers(2, 8)] = 1.0

print(f"{n} binary examples of dimension {d}, mean on-rate {data.mean():.2f}")

cfg = PretrainConfig(learning_rate=0.1, epochs=12, batch_size=25, seed=1)
rbm, history = train_rbm(data, 16, cfg)
print("\nreconstruction cross-entropy per epoch:")
for epoch, ce in enumerate(history, start=1):
    bar = "#" * int(ce * 2)
    print(f"  epoch {epoch:2d}: {ce:7.3f} {bar}")
print(f"improvement epoch 1 -> {cfg.epochs}: "
      f"{history[0]:.3f} -> {history[-1]:.3f}")

sizes = [16, 8, 4]
layers = pretrain_stack(data, sizes, cfg)
print(f"\ngreedy stack for layer sizes {sizes}:")
for i, (W, b) in enumerate(layers):
    print(f"  layer {i}: weights {W.shape}, hidden bias {b.shape}, "
          f"|W| mean {np.abs(W).mean():.3f}")
print("these (weights, bias) pairs initialize the encoder stack")
