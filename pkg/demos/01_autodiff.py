"""
Reverse-mode autodiff on numpy arrays
=====================================

The models are built on a small tape-based autodiff core. This script
builds a scalar from a few ops, runs ``backward`` and checks the result
against central differences.
"""

import numpy as np

from mcqa_transfer.tensor import Tensor, backward, cross_entropy, matmul, no_grad, relu

rng = np.random.default_rng(0)

# %%
# A two-layer scorer over 4 choices with 3 features each.
x = Tensor(rng.normal(size=(4, 3)))
W1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
w2 = Tensor(rng.normal(size=(5, 1)), requires_grad=True)


def loss():
    logits = matmul(relu(matmul(x, W1)), w2).reshape(1, 4)
    return cross_entropy(logits, np.array([2]))


backward(loss())
print("analytic dL/dw2:", np.round(w2.grad.ravel(), 5))

# %%
# The same gradient by central differences, with the tape switched off.
h = 1e-5
numeric = np.zeros_like(w2.data)
with no_grad():
    for i in range(w2.data.shape[0]):
        old = w2.data[i, 0]
        w2.data[i, 0] = old + h
        up = loss().item()
        w2.data[i, 0] = old - h
        down = loss().item()
        w2.data[i, 0] = old
        numeric[i, 0] = (up - down) / (2 * h)
print("numeric  dL/dw2:", np.round(numeric.ravel(), 5))
print("max abs difference:", np.abs(numeric - w2.grad).max())
