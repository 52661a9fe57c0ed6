"""Minimal module system: parameter containers, common layers, profiling."""
from __future__ import annotations

import contextlib
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .core import Tensor, _local, get_default_dtype, no_grad, sum_

__all__ = [
    "Module",
    "ModuleList",
    "Linear",
    "LayerNorm",
    "BatchNorm2d",
    "Conv2d",
    "Deconv2d",
    "Profile",
    "profile",
    "param",
]


def param(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Base class; parameters are Tensor attributes with ``requires_grad``.

    Non-trainable state that must be checkpointed (running statistics,
    power-iteration vectors) is registered with :meth:`register_buffer`.
    """

    training = True

    def __init__(self):
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_scope", type(self).__name__)
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
            object.__setattr__(value, "_scope", name)
        elif isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, value: np.ndarray):
        self._buffers[name] = name
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        prof = getattr(_local, "profiler", None)
        if prof is None:
            return self.forward(*args, **kwargs)
        with prof.scope(self._scope, self):
            return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(b, copy=True) for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict, strict: bool = True):
        own = dict(self.named_parameters())
        bufs = {}
        for m_prefix, m in self._walk(""):
            for name in m._buffers:
                bufs[m_prefix + name] = (m, name)
        missing = (set(own) | set(bufs)) - set(state)
        unexpected = set(state) - set(own) - set(bufs)
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in own.items():
            if name in state:
                arr = np.asarray(state[name])
                if arr.shape != p.shape:
                    raise ValueError(f"{name}: shape {arr.shape} does not match {p.shape}")
                p.data = arr.astype(p.dtype).copy()
        for name, (m, attr) in bufs.items():
            if name in state:
                object.__setattr__(m, attr, np.array(state[name], copy=True))

    def _walk(self, prefix):
        yield prefix, self
        for name, m in self._modules.items():
            yield from m._walk(prefix + name + ".")

    def cast(self, dtype):
        """Convert parameters in place (e.g. to float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, m: Module):
        idx = len(self._items)
        self._modules[str(idx)] = m
        object.__setattr__(m, "_scope", str(idx))
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """``y = x @ W + b`` with ``W`` of shape (in, out)."""

    def __init__(self, n_in, n_out, rng: np.random.Generator, bias=True):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.weight = param(_uniform(rng, (n_in, n_out), bound))
        self.bias = param(_uniform(rng, (n_out,), bound)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gain = param(np.ones(dim))
        self.shift = param(np.zeros(dim))

    def forward(self, x):
        return F.layer_norm(x, self.gain, self.shift, self.eps)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = param(np.ones(channels))
        self.beta = param(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Conv2d(Module):
    """2-D convolution, optionally spectrally normalized.

    With ``spectral_norm=True`` the kernel is divided by an estimate of its
    largest singular value (kernel reshaped to ``(out, in*kh*kw)``). The
    estimate comes from one power-iteration step per training forward pass,
    with the singular vectors cached between calls.
    """

    def __init__(self, c_in, c_out, kernel, stride, pad, rng: np.random.Generator,
                 bias=True, spectral_norm=False):
        super().__init__()
        kh, kw = F._pair(kernel)
        bound = 1.0 / np.sqrt(c_in * kh * kw)
        self.stride, self.pad = stride, pad
        self.weight = param(_uniform(rng, (c_out, c_in, kh, kw), bound))
        self.bias = param(np.zeros(c_out)) if bias else None
        self.spectral_norm = spectral_norm
        if spectral_norm:
            u = rng.standard_normal(c_out)
            self.register_buffer("sn_u", u / np.linalg.norm(u))
            # warm start so the very first forward already sees a tight estimate
            for _ in range(30):
                self._power_step()

    def _power_step(self):
        w = self.weight.data.reshape(self.weight.shape[0], -1).astype(np.float64)
        v = w.T @ self.sn_u
        v /= max(np.linalg.norm(v), 1e-12)
        u = w @ v
        u /= max(np.linalg.norm(u), 1e-12)
        object.__setattr__(self, "sn_u", u)
        return u, v

    def normalized_weight(self) -> Tensor:
        if not self.spectral_norm:
            return self.weight
        if self.training:
            u, v = self._power_step()
        else:
            u = self.sn_u
            w = self.weight.data.reshape(self.weight.shape[0], -1).astype(np.float64)
            v = w.T @ u
            v /= max(np.linalg.norm(v), 1e-12)
        dt = self.weight.dtype
        w_mat = self.weight.reshape(self.weight.shape[0], -1)
        sigma = sum_(Tensor._wrap(u.astype(dt)[:, None]) * w_mat * Tensor._wrap(v.astype(dt)[None, :]))
        return self.weight / sigma

    def forward(self, x):
        return F.conv2d(x, self.normalized_weight(), self.stride, self.pad, bias=self.bias)


class Deconv2d(Module):
    """Transposed convolution with kernel layout (in, out, kh, kw)."""

    def __init__(self, c_in, c_out, kernel, stride, pad, rng: np.random.Generator, bias=True):
        super().__init__()
        kh, kw = F._pair(kernel)
        bound = 1.0 / np.sqrt(c_in * kh * kw)
        self.stride, self.pad = stride, pad
        self.weight = param(_uniform(rng, (c_in, c_out, kh, kw), bound))
        self.bias = param(np.zeros(c_out)) if bias else None

    def forward(self, x):
        return F.deconv2d(x, self.weight, self.stride, self.pad, bias=self.bias)


# ---------------------------------------------------------------------------
# profiling
# ---------------------------------------------------------------------------
MAC_OPS = frozenset({"matmul", "conv2d", "deconv2d", "conv2d_weight_grad"})

@dataclass
class Profile:
    """Multiply-accumulate counts per module scope, gathered over forward passes."""

    macs: dict = field(default_factory=lambda: defaultdict(int))
    by_op: dict = field(default_factory=lambda: defaultdict(int))
    # output elements of every non-MAC primitive (activations, norms, adds)
    elementwise: dict = field(default_factory=lambda: defaultdict(int))
    _stack: list = field(default_factory=list)

    @contextlib.contextmanager
    def scope(self, name, module=None):
        self._stack.append(name)
        try:
            yield
        finally:
            self._stack.pop()

    @property
    def path(self):
        return "/".join(self._stack)

    def record(self, op, macs):
        self.macs[(self.path, op)] += int(macs)
        self.by_op[op] += int(macs)

    def record_elementwise(self, op, n):
        if op not in MAC_OPS:
            self.elementwise[(self.path, op)] += int(n)

    def elementwise_total(self, scope: str = "") -> int:
        needle = f"/{scope}/" if scope else "/"
        return sum(v for (path, _), v in self.elementwise.items() if needle in f"/{path}/")

    def total(self, scope: str = "", ops=None) -> int:
        """MACs recorded inside ``scope`` (a ``/``-separated run of scope names).

        ``ops`` optionally restricts the count to the named primitives.
        """
        needle = f"/{scope}/" if scope else "/"
        return sum(v for (path, op), v in self.macs.items()
                   if needle in f"/{path}/" and (ops is None or op in ops))


@contextlib.contextmanager
def profile(root_scope: str | None = None):
    """Record MACs of matmul/conv primitives run inside the block (no autograd)."""
    prof = Profile()
    prev = getattr(_local, "profiler", None)
    _local.profiler = prof
    try:
        with no_grad():
            if root_scope:
                with prof.scope(root_scope):
                    yield prof
            else:
                yield prof
    finally:
        _local.profiler = prev


def default_float():
    return get_default_dtype()
