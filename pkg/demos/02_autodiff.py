"""The tensor tape: forward ops, reverse-mode gradients, finite differences.

Run: python demos/02_autodiff.py
"""

import numpy as np

from pointerparse.autodiff import (
    Tape,
    constant,
    matmul,
    mul,
    parameter,
    reduce_sum,
    softmax,
)

rng = np.random.default_rng(0)

# A throwaway "model": loss = sum(softmax(x W) * target)
x = constant(rng.standard_normal((4, 6)).astype(np.float32))
w = parameter(rng.standard_normal((6, 3)).astype(np.float32) * 0.3)
target = constant(rng.random((4, 3)).astype(np.float32))


def forward():
    return reduce_sum(mul(softmax(matmul(x, w)), target))


with Tape() as tape:
    loss = forward()
    tape.backward(loss)
print("loss:", loss.item())
print("grad shape:", w.grad.shape, "| grad norm:", float(np.linalg.norm(w.grad)))

# Central finite differences agree with the tape.
h = 1e-3
fd = np.zeros_like(w.data)
for i in range(w.data.size):
    flat = w.data.reshape(-1)
    orig = flat[i]
    flat[i] = orig + h
    up = forward().item()
    flat[i] = orig - h
    down = forward().item()
    flat[i] = orig
    fd.reshape(-1)[i] = (up - down) / (2 * h)

worst = np.max(np.abs(fd - w.grad))
print(f"max |finite difference - tape gradient| = {worst:.2e}")
assert worst < 1e-3

# Outside a tape, ops are pure forward computations: nothing records.
out = matmul(x, w)
print("recorded backward closure without a tape:", out._backward is not None)
