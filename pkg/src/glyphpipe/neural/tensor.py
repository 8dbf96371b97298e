"""Reverse-mode autodiff over numpy arrays.

Primitives record themselves onto the ambient :class:`Tape` in execution
order (which is already topological), and ``Tape.backward`` replays that
record once in reverse, accumulating gradients on fan-out. Parameters are
float32 by default; gradient-check code may build float64 tensors to keep
finite-difference probes meaningful. Reductions accumulate in float64 and
cast back, so float32 training stays numerically honest without doubling
memory.
"""

from __future__ import annotations

import numpy as np

from ..errors import GlyphPipeError


class ShapeMismatch(GlyphPipeError):
    """Operands have incompatible shapes; the message carries both."""


class NonScalarLoss(GlyphPipeError):
    """backward() requires a scalar loss tensor."""


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class Node:
    """One recorded primitive: inputs, output, and the gradient rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Execution-ordered record of primitives for one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Propagate d(loss)/dx to every recorded tensor; returns grads of named tensors.

        Leaf gradients accumulate into ``tensor.grad`` (callers zero them
        between steps); each node is visited exactly once, in reverse of the
        recorded (topological) order.
        """
        if loss.size != 1:
            raise NonScalarLoss(f"loss has shape {loss.shape}, expected a scalar")
        flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        named: dict[str, np.ndarray] = {}
        for node in reversed(self.nodes):
            gout = flowing.pop(id(node.output), None)
            if gout is None:
                continue  # this value never reached the loss
            for tensor, grad in zip(node.inputs, node.backward_fn(gout)):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in flowing:
                    flowing[key] = flowing[key] + grad
                else:
                    flowing[key] = grad
        # at this point `flowing` holds gradients only for graph leaves
        for node in self.nodes:
            for tensor in node.inputs:
                key = id(tensor)
                if key in flowing and tensor.requires_grad:
                    grad = flowing.pop(key).astype(tensor.data.dtype, copy=False)
                    tensor.grad = grad if tensor.grad is None else tensor.grad + grad
                    if tensor.name is not None:
                        named[tensor.name] = tensor.grad
        return named


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def _record(op, inputs, out_data, backward_fn) -> Tensor:
    tape = _ACTIVE_TAPE
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track, dtype=out_data.dtype)
    if track:
        tape.nodes.append(Node(op, tuple(inputs), out, backward_fn))
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", (a, b), out, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", (a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", (a, b), out, backward)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    out = a.data * a.data.dtype.type(s)

    def backward(g):
        return (g * a.data.dtype.type(s),)

    return _record("scale", (a,), out, backward)


def matmul(a, b) -> Tensor:
    """Matrix product; supports equal leading batch dims or a 2-D operand on either side."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    out = np.matmul(a.data, b.data)

    def backward(g):
        bt = np.swapaxes(b.data, -1, -2)
        at = np.swapaxes(a.data, -1, -2)
        ga = np.matmul(g, bt)
        gb = np.matmul(at, g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record("matmul", (a, b), out, backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0)

    def backward(g):
        return (g * (a.data > 0),)

    return _record("relu", (a,), out, backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _record("reshape", (a,), out, backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return _record("transpose", (a,), out, backward)


def _reduced_cast(x: np.ndarray, dtype) -> np.ndarray:
    return np.asarray(x, dtype=dtype)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _reduced_cast(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64), a.dtype)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).astype(a.dtype, copy=False),)

    return _record("sum", (a,), out, backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    out = _reduced_cast(a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64), a.dtype)

    def backward(g):
        if axis is None:
            g2 = g
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / count, a.shape).astype(a.dtype, copy=False),)

    return _record("mean", (a,), out, backward)
