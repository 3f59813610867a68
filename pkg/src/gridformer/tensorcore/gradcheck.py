"""Central-difference validation of reverse-mode gradients."""

import numpy as np

from .tensor import Tape, Tensor


def gradcheck(fn, inputs, h=1e-6):
    """Compare reverse-mode gradients of a scalar ``fn`` against central
    differences, one coordinate at a time.

    fn: callable taking the list of tensors and returning a scalar Tensor,
    built from tensorcore primitives. Returns the worst relative error over
    all coordinates of all inputs that require gradients, with denominators
    floored at 1e-8.
    """
    inputs = list(inputs)
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        out = fn(inputs)
        if not isinstance(out, Tensor) or out.size != 1:
            raise ValueError("gradcheck requires a scalar-valued function")
        tape.backward(out)

    def eval_fn():
        with Tape():
            return fn(inputs).item()

    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = eval_fn()
            flat[i] = orig - h
            f_minus = eval_fn()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
