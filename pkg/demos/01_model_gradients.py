"""
Backpropagation check on a tiny MLP
===================================

The model is a plain stack of dense layers stored as one flat vector per
layer (weights row-major, then biases).  Here we compare the analytic
gradient with central finite differences.
"""

import numpy as np

from lfgadmm.model import MiniBatch, forward_loss, grad, init_params, mlp_spec, param_counts

# The desk-scale MNIST network and its per-layer sizes
print("MNIST MLP layer sizes:", param_counts(mlp_spec()))

# A small network is enough to see the gradient agree with finite differences
spec = mlp_spec((5, 4, 3))
params = init_params(spec, seed=0)
rng = np.random.default_rng(1)
batch = MiniBatch(rng.normal(size=(8, 5)), rng.integers(0, 3, size=8))

analytic = grad(spec, params, batch)
step = 1e-5
for layer, (vec, g) in enumerate(zip(params, analytic)):
    fd = np.zeros_like(vec)
    for i in range(vec.size):
        plus = [p.copy() for p in params]
        minus = [p.copy() for p in params]
        plus[layer][i] += step
        minus[layer][i] -= step
        fd[i] = (forward_loss(spec, plus, batch) - forward_loss(spec, minus, batch)) / (2 * step)
    print(f"layer {layer}: max |analytic - fd| = {np.abs(g - fd).max():.2e}")
