"""The logistic encoder and its gradients.

Encodes a frame through a 2-layer stack, backpropagates a loss signal, and
verifies the weight gradients against central finite differences.  Also shows
the L1 subgradient step that the trainer applies to encoder weights.
"""

import numpy as np

from deepcrf import EncoderStack, backprop, encode, sgd_step

rng = np.random.default_rng(11)
sizes = [6, 5, 3]
enc = EncoderStack([
    (rng.standard_normal((6, 5)) * 0.8, rng.standard_normal(5) * 0.2),
    (rng.standard_normal((5, 3)) * 0.8, rng.standard_normal(3) * 0.2),
])
x = rng.standard_normal(6)

h, trace = encode(enc, x)
print(f"input dim 6 -> hidden 5 -> latent 3: h = {np.round(h, 4)}")
print(f"trace keeps {len(trace.activations)} activation vectors (input included)")

# gradient of 0.5 * ||h - target||^2 through the stack
target = rng.standard_normal(3)
grads = backprop(enc, trace, h - target)

eps = 1e-5
worst = 0.0
for l, (W, _) in enumerate(enc.layers):
    fd = np.zeros_like(W)
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            orig = W[i, j]
            W[i, j] = orig + eps
            hi = 0.5 * np.sum((encode(enc, x)[0] - target) ** 2)
            W[i, j] = orig - eps
            lo = 0.5 * np.sum((encode(enc, x)[0] - target) ** 2)
            W[i, j] = orig
            fd[i, j] = (hi - lo) / (2 * eps)
    err = np.abs(grads[l][0] - fd).max()
    worst = max(worst, err)
    print(f"layer {l}: max |backprop - finite difference| = {err:.2e}")
print(f"worst disagreement: {worst:.2e} (finite differences carry O(eps^2) error)")

# the L1 step: weights shrink toward zero, biases are exempt
toy = EncoderStack([(np.array([[1.0, -2.0, 0.0]]), np.array([0.5, 0.5, 0.5]))])
sgd_step(toy, [(np.zeros((1, 3)), np.zeros(3))], lr=1.0, lambda3=0.5)
print(f"\nL1 step with lr=1, lambda3=0.5 on weights [1, -2, 0]:"
      f" -> {toy.layers[0][0][0]}")
print(f"biases untouched by the penalty: {toy.layers[0][1]}")
