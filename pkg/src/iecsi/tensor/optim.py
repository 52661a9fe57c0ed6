"""Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Tensor

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, param: Tensor, grad: np.ndarray) -> Tensor:
    """One bias-corrected Adam update of ``param`` in place."""
    grad = np.asarray(grad)
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameter shape {param.shape}")
    if state.m is None:
        state.m = np.zeros(param.shape, dtype=np.float64)
        state.v = np.zeros(param.shape, dtype=np.float64)
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    param.data = (param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return param


@dataclass
class Adam:
    params: list
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    states: list = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        self.states = [AdamState(self.lr, self.betas[0], self.betas[1], self.eps) for _ in self.params]

    def set_lr(self, lr: float):
        self.lr = lr
        for s in self.states:
            s.lr = lr

    def step(self):
        for p, s in zip(self.params, self.states):
            if p.grad is not None:
                adam_step(s, p, p.grad)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        out = {"t": np.array([s.t for s in self.states])}
        for i, s in enumerate(self.states):
            if s.m is not None:
                out[f"m.{i}"] = s.m
                out[f"v.{i}"] = s.v
        return out

    def load_state_dict(self, state: dict):
        for i, s in enumerate(self.states):
            s.t = int(state["t"][i])
            if f"m.{i}" in state:
                s.m = np.array(state[f"m.{i}"], dtype=np.float64)
                s.v = np.array(state[f"v.{i}"], dtype=np.float64)
