"""
Gradients from the tape
=======================

Every operation run inside a ``Tape`` is recorded, and ``backward`` walks
the record in reverse.  A finite-difference estimate is the obvious check.
"""

import numpy as np

from chronoskill import ndmath as nd

rng = np.random.default_rng(0)
w = nd.Tensor(rng.normal(size=(3, 2)), "w")
b = nd.Tensor(np.zeros(2), "b")
logstd = nd.Tensor(np.full((4, 2), -0.5), "logstd")
x = rng.normal(size=(4, 3))
action = rng.normal(size=(4, 2))


def loss():
    mean = nd.tanh(nd.affine(x, w, b))
    return -nd.mean(nd.gaussian_logprob(mean, logstd, action))


with nd.Tape() as tape:
    value = loss()
grads = nd.backward(tape, value, [w, b, logstd])


def loss_at(v):
    saved, w.data = w.data, v
    try:
        return loss().item()
    finally:
        w.data = saved


print("loss", value.item())
print("tape gradient\n", grads[w])
print("finite differences\n", nd.finite_diff_grad(loss_at, w.data))

# a parameter with no path to the loss gets an exact zero
unused = nd.Tensor(np.ones(3), "unused")
with nd.Tape() as tape:
    value = loss()
print(nd.backward(tape, value, [unused])[unused])
