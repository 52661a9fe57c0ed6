"""
Dense tensors with reverse-mode automatic differentiation.

Every primitive records a node holding its inputs and a backward rule. The
backward rules are themselves written with tensor primitives, so running a
backward pass with ``create_graph=True`` records a differentiable graph of
the gradient (needed for gradient penalties).
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Tensor",
    "GradientTape",
    "NonFiniteError",
    "UsageError",
    "tensor",
    "grad",
    "backward",
    "no_grad",
    "enable_grad",
    "is_grad_enabled",
    "debug_mode",
    "get_default_dtype",
    "set_default_dtype",
    "default_dtype",
]


class NonFiniteError(FloatingPointError):
    """Raised in debug mode when an operation produces NaN or Inf."""


class UsageError(ValueError):
    pass


_local = threading.local()
_seq = itertools.count()
_DEFAULT_DTYPE = [np.dtype(np.float32)]


def is_grad_enabled() -> bool:
    return getattr(_local, "grad", True)


@contextlib.contextmanager
def enable_grad(flag: bool = True):
    prev = is_grad_enabled()
    _local.grad = flag
    try:
        yield
    finally:
        _local.grad = prev


def no_grad():
    return enable_grad(False)


@contextlib.contextmanager
def debug_mode(flag: bool = True):
    """Check every op output for NaN/Inf and raise :class:`NonFiniteError`."""
    prev = getattr(_local, "debug", False)
    _local.debug = flag
    try:
        yield
    finally:
        _local.debug = prev


def get_default_dtype():
    return _DEFAULT_DTYPE[0]


def set_default_dtype(dtype):
    _DEFAULT_DTYPE[0] = np.dtype(dtype)


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _DEFAULT_DTYPE[0]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE[0] = prev


class _Node:
    __slots__ = ("op", "inputs", "backward", "seq")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.seq = next(_seq)


class Tensor:
    """A dense floating-point array that can take part in differentiation.

    Constructing a tensor from user data casts it to the default dtype
    (float32 unless changed with :func:`set_default_dtype`).
    """

    __array_priority__ = 100.0
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = np.array(data, dtype=dtype or get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None
        self.name = name

    @classmethod
    def _wrap(cls, data) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        t.requires_grad = False
        t.grad = None
        t._node = None
        t.name = None
        return t

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def tanh(self):
        return tanh(self)

    def backward(self):
        backward(self)


def tensor(data, requires_grad=False, dtype=None, name=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor._wrap(np.asarray(x, dtype=dtype))


def _profile_hook(op, macs):
    prof = getattr(_local, "profiler", None)
    if prof is not None:
        prof.record(op, macs)


def _make(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor._wrap(data)
    prof = getattr(_local, "profiler", None)
    if prof is not None:
        prof.record_elementwise(op, data.size)
    if getattr(_local, "debug", False) and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = _Node(op, tuple(inputs), backward_fn)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------
def _sum_to_shape(a: np.ndarray, shape) -> np.ndarray:
    if a.shape == tuple(shape):
        return a
    lead = a.ndim - len(shape)
    if lead:
        a = a.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and a.shape[i] != 1)
    if axes:
        a = a.sum(axis=axes, keepdims=True)
    return a


def sum_to(x: Tensor, shape) -> Tensor:
    """Reduce a broadcast result back to ``shape``."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _make("sum_to", _sum_to_shape(x.data, shape), (x,),
                 lambda g: (broadcast_to(g, src),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _make("broadcast_to", np.broadcast_to(x.data, shape).copy(), (x,),
                 lambda g: (sum_to(g, src),))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (sum_to(g, sa), sum_to(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (sum_to(g, sa), sum_to(neg(g), sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (sum_to(g * b, a.shape) if a.requires_grad else None,
                            sum_to(g * a, b.shape) if b.requires_grad else None))


def div(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    return _make("div", a.data / b.data, (a, b),
                 lambda g: (sum_to(g / b, a.shape) if a.requires_grad else None,
                            sum_to(neg(g) * a / (b * b), b.shape) if b.requires_grad else None))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (neg(g),))


def power(a: Tensor, p: float) -> Tensor:
    if isinstance(p, Tensor):
        raise UsageError("power only supports a constant exponent")
    p = float(p)
    if p == 1.0:
        return a
    return _make("pow", a.data ** np.asarray(p, dtype=a.dtype), (a,),
                 lambda g: (g * p * power(a, p - 1.0),))


def exp(a: Tensor) -> Tensor:
    return _make("exp", np.exp(a.data), (a,), lambda g: (g * exp(a),))


def log(a: Tensor) -> Tensor:
    return _make("log", np.log(a.data), (a,), lambda g: (g / a,))


def sqrt(a: Tensor) -> Tensor:
    return _make("sqrt", np.sqrt(a.data), (a,), lambda g: (g * 0.5 / sqrt(a),))


def tanh(a: Tensor) -> Tensor:
    def bw(g):
        t = tanh(a)
        return (g * (1.0 - t * t),)
    return _make("tanh", np.tanh(a.data), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    def bw(g):
        s = sigmoid(a)
        return (g * s * (1.0 - s),)
    return _make("sigmoid", special.expit(a.data), (a,), bw)


_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


def erf(a: Tensor) -> Tensor:
    return _make("erf", special.erf(a.data), (a,),
                 lambda g: (g * _TWO_OVER_SQRT_PI * exp(neg(a * a)),))


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    if a.ndim < 2 or b.ndim < 2:
        raise UsageError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    out = a.data @ b.data
    _profile_hook("matmul", int(np.prod(out.shape)) * a.shape[-1])

    def bw(g):
        ga = sum_to(g @ b.swapaxes(-1, -2), a.shape) if a.requires_grad else None
        gb = sum_to(a.swapaxes(-1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb
    return _make("matmul", out, (a, b), bw)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    src = a.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def bw(g):
        return (broadcast_to(reshape(g, kept), src),)
    return _make("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return sum_(a, axes, keepdims) * (1.0 / n)


def var(a: Tensor, axis=None, keepdims=False) -> Tensor:
    """Population variance."""
    d = a - mean(a, axis, keepdims=True)
    return mean(d * d, axis, keepdims)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------
def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (reshape(g, src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(ax % a.ndim for ax in axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,), lambda g: (transpose(g, inv),))


def getitem(a: Tensor, idx) -> Tensor:
    src = a.shape
    return _make("getitem", a.data[idx], (a,), lambda g: (scatter(g, idx, src),))


def scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` added at ``idx`` (adjoint of indexing)."""
    out = np.zeros(shape, dtype=g.dtype)
    np.add.at(out, idx, g.data)
    return _make("scatter", out, (g,), lambda gg: (getitem(gg, idx),))


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        out = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            out.append(getitem(g, tuple(sl)) if t.requires_grad else None)
        return tuple(out)
    return _make("concatenate", np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    nd = tensors[0].ndim + 1
    axis = axis % nd
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concatenate(expanded, axis=axis)


def split(a: Tensor, sections: int, axis: int = 0) -> list[Tensor]:
    n = a.shape[axis]
    if n % sections:
        raise UsageError(f"cannot split extent {n} into {sections} equal parts")
    step = n // sections
    out = []
    for k in range(sections):
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(k * step, (k + 1) * step)
        out.append(getitem(a, tuple(sl)))
    return out


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------
class GradientTape:
    """Recorded operations reachable from ``root``, newest first.

    Node sequence numbers follow recording order, which is a topological
    order of the graph; replaying in decreasing sequence therefore visits
    every operation after all of its consumers.
    """

    def __init__(self, root: Tensor, targets: Sequence[Tensor] | None = None):
        self.root = root
        records, leaves, seen = [], [], set()
        stack_ = [root]
        while stack_:
            t = stack_.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._node is None:
                if t.requires_grad:
                    leaves.append(t)
                continue
            records.append(t)
            stack_.extend(t._node.inputs)
        records.sort(key=lambda t: t._node.seq)
        if targets is not None:
            wanted = {id(t) for t in targets}
            useful = set(wanted)
            kept = []
            for t in records:
                if any(id(i) in useful for i in t._node.inputs):
                    useful.add(id(t))
                    kept.append(t)
            records = kept
        records.reverse()
        self.records = records
        self.leaves = leaves

    def __len__(self):
        return len(self.records)

    def ops(self) -> list[str]:
        return [t._node.op for t in self.records]

    def replay(self, seed: Tensor, create_graph: bool = False, keep=()) -> dict:
        """Propagate ``seed`` (d loss / d root) and return ``{id(tensor): grad}``."""
        grads = {id(self.root): seed}
        keep = {id(t) for t in keep}
        saved = {}
        with enable_grad(create_graph):
            for t in self.records:
                g = grads.pop(id(t), None)
                if g is None:
                    continue
                if id(t) in keep:
                    saved[id(t)] = g
                for inp, ig in zip(t._node.inputs, t._node.backward(g)):
                    if ig is None or not inp.requires_grad:
                        continue
                    key = id(inp)
                    grads[key] = grads[key] + ig if key in grads else ig
        grads.update(saved)
        return grads


def _check_scalar(loss: Tensor):
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")


def backward(loss: Tensor, tape: GradientTape | None = None):
    """Accumulate d loss / d leaf into ``.grad`` (numpy) of every leaf on the tape."""
    _check_scalar(loss)
    tape = tape or GradientTape(loss)
    grads = tape.replay(Tensor._wrap(np.ones_like(loss.data)))
    for leaf in tape.leaves:
        g = grads.get(id(leaf))
        if g is None:
            continue
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def grad(loss: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``loss`` with respect to ``inputs``.

    Inputs that do not influence ``loss`` get zero gradients. With
    ``create_graph=True`` the returned tensors are themselves differentiable.
    """
    _check_scalar(loss)
    inputs = list(inputs)
    tape = GradientTape(loss, targets=inputs)
    grads = tape.replay(Tensor._wrap(np.ones_like(loss.data)), create_graph=create_graph, keep=inputs)
    out = []
    for t in inputs:
        g = grads.get(id(t))
        out.append(g if g is not None else Tensor._wrap(np.zeros_like(t.data)))
    return out
