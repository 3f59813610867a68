"""Minimal tape-based reverse-mode differentiation on dense numpy arrays.

Only the handful of primitives the occupancy model needs live here; each one
has a hand-written backward validated against central differences (see
``gradcheck``). Accumulation order is fixed (ascending row index) so repeated
runs are bitwise identical.
"""

import numpy as np

# Compute dtype for newly created tensors. float64 is the reference/test
# precision; training may switch to float32 for speed.
_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Dense real array plus an optional same-shape gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        """Add into the gradient buffer; never overwrites prior contributions."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self):
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed primitives, replayed in reverse on backward.

    Use as a context manager; primitives executed inside record themselves
    when any differentiable input is involved.
    """

    def __init__(self):
        self._nodes = []  # (out_tensor, backward_fn) in execution order

    def record(self, out, backward_fn):
        self._nodes.append((out, backward_fn))

    def backward(self, loss):
        """Seed d(loss)/d(loss)=1 and propagate through the tape in reverse."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.accumulate_grad(np.ones_like(loss.data))
        for out, backward_fn in reversed(self._nodes):
            if out.grad is not None:
                backward_fn(out.grad)

    def clear(self):
        """Drop all recorded intermediates."""
        self._nodes.clear()

    def __len__(self):
        return len(self._nodes)

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False


_tape_stack = []


def active_tape():
    return _tape_stack[-1] if _tape_stack else None


def record_op(inputs, out, backward_fn):
    """Register ``out`` on the active tape if any input needs gradients."""
    tape = active_tape()
    if tape is None:
        return out
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, backward_fn)
    return out


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
