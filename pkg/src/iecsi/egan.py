"""
Two-scale Wasserstein GAN for paired CSI synthesis.

The generator maps a noise vector to a low-dimensional CSI matrix X^GL
(2 x N_T x N_grp, real and imaginary planes) through transposed
convolutions, then derives the full-band matrix X^GF (2 x N_T x N_c) from it
with an embedded frequency extrapolation network. Two spectrally normalized
convolutional critics score the two scales; training uses the Wasserstein
objective with gradient penalties.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .codec.model import ExtrapolationNetwork
from .datafile import FLAG_EIGEN, FLAG_SYNTHETIC, DatasetFile
from .tensor import Adam, Tensor, grad, no_grad
from .tensor import functional as F
from .tensor.core import mean, reshape, sqrt, sum_, tanh
from .tensor.nn import BatchNorm2d, Conv2d, Deconv2d, Module, ModuleList

__all__ = [
    "GanConfig",
    "Generator",
    "Discriminator",
    "EganModel",
    "StepStats",
    "gradient_penalty",
    "egan_train_step",
    "train_egan",
    "critic_ascent",
    "egan_sample",
    "sample_dataset_files",
    "real_pairs",
    "save_egan",
    "load_egan",
]

log = logging.getLogger(__name__)


def _log2(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{n} is not a power of two")
    return n.bit_length() - 1


@dataclass(frozen=True)
class GanConfig:
    n_tx: int = 32
    n_grp: int = 64
    n_c: int = 1024
    l_z: int = 128
    d_g: int = 512
    d_d1: int = 32
    d_d2: int = 32
    lambda1: float = 10.0
    lambda2: float = 10.0
    n_critic: int = 5
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 32
    slope: float = 0.2
    mapping: str = "interleaved"
    seed: int = 0

    def __post_init__(self):
        errors = []
        for name in ("n_tx", "n_grp", "n_c"):
            v = getattr(self, name)
            if v < 4 or v & (v - 1):
                errors.append(f"{name}={v} must be a power of two >= 4")
        if not errors:
            if self.n_c % self.n_grp:
                errors.append("n_grp must divide n_c")
            if self.d_g % (1 << self.n_g):
                errors.append(f"d_g={self.d_g} must be divisible by 2^N_G={1 << self.n_g}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def n_gr(self) -> int:
        return self.n_c // self.n_grp

    @property
    def n_g(self) -> int:
        return min(_log2(self.n_tx), _log2(self.n_grp)) - 1

    @property
    def n_d1(self) -> int:
        return min(_log2(self.n_tx), _log2(self.n_grp)) - 1

    @property
    def n_d2(self) -> int:
        return min(_log2(self.n_tx), _log2(self.n_c)) - 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown EGAN config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def toy(cls, **overrides) -> "GanConfig":
        base = dict(n_tx=8, n_grp=16, n_c=64)
        base.update(overrides)
        return cls(**base)


class Generator(Module):
    def __init__(self, cfg: GanConfig, rng):
        super().__init__()
        self.cfg = cfg
        ng = cfg.n_g
        kh, kw = cfg.n_tx >> (ng + 1), cfg.n_grp >> (ng + 1)
        self.pre = Deconv2d(cfg.l_z, cfg.d_g, (kh, kw), 1, 0, rng)
        self.pre_bn = BatchNorm2d(cfg.d_g)
        self.up = ModuleList(Deconv2d(cfg.d_g >> i, cfg.d_g >> (i + 1), 4, 2, 1, rng) for i in range(ng))
        self.up_bn = ModuleList(BatchNorm2d(cfg.d_g >> (i + 1)) for i in range(ng))
        self.post = Deconv2d(cfg.d_g >> ng, 2, 4, 2, 1, rng)
        self.fen = ExtrapolationNetwork(cfg.n_gr, cfg.n_grp, rng, cfg.mapping)

    def low(self, z: Tensor, trace: list | None = None) -> Tensor:
        """X^GL of shape (B, 2, N_T, N_grp); ``trace`` collects intermediate shapes."""
        cfg = self.cfg
        if z.shape[-1] != cfg.l_z:
            raise ValueError(f"noise must have length {cfg.l_z}, got {z.shape[-1]}")
        h = reshape(z, (z.shape[0], cfg.l_z, 1, 1))
        h = F.leaky_relu(self.pre_bn(self.pre(h)), cfg.slope)
        if trace is not None:
            trace.append(h.shape[1:])
        for deconv, bn in zip(self.up, self.up_bn):
            h = F.leaky_relu(bn(deconv(h)), cfg.slope)
            if trace is not None:
                trace.append(h.shape[1:])
        return tanh(self.post(h))

    def full(self, x_gl: Tensor) -> Tensor:
        """X^GF = R(F_ext(R(X^GL))): (B, 2, N_T, N_grp) -> (B, 2, N_T, N_c)."""
        b, _, nt, ngrp = x_gl.shape
        y = self.fen(reshape(x_gl, (b, 2 * nt, ngrp)))
        return reshape(y, (b, 2, nt, y.shape[-1]))

    def forward(self, z: Tensor):
        x_gl = self.low(z)
        return x_gl, self.full(x_gl)


class Discriminator(Module):
    """Conv block plus ``depth`` down-sampling blocks, all spectrally normalized."""

    def __init__(self, width: int, depth: int, rng, slope: float = 0.2):
        super().__init__()
        self.slope = slope
        self.convs = ModuleList([Conv2d(2, width, 4, 2, 1, rng, spectral_norm=True)] +
                                [Conv2d(width << i, width << (i + 1), 4, 2, 1, rng, spectral_norm=True)
                                 for i in range(depth)])

    def features(self, x: Tensor) -> Tensor:
        """Final 3-D feature tensor per sample: (B, C, H, W)."""
        if x.ndim != 4 or x.shape[1] != 2:
            raise ValueError(f"critic expects (B, 2, N_T, N) input, got shape {x.shape}")
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.slope)
        return h

    def forward(self, x: Tensor) -> Tensor:
        """Scalar critic value per sample: mean over the feature tensor."""
        return mean(self.features(x), (1, 2, 3))


class EganModel(Module):
    def __init__(self, cfg: GanConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.generator = Generator(cfg, rng)
        self.d1 = Discriminator(cfg.d_d1, cfg.n_d1, rng, cfg.slope)
        self.d2 = Discriminator(cfg.d_d2, cfg.n_d2, rng, cfg.slope)
        self.noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        opt = dict(lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
        self.opt_g = Adam(self.generator.parameters(), **opt)
        self.opt_d = Adam(self.d1.parameters() + self.d2.parameters(), **opt)

    def noise(self, n: int, rng=None) -> Tensor:
        rng = rng or self.noise_rng
        return Tensor(rng.standard_normal((n, self.cfg.l_z)))


def gradient_penalty(D, real, fake, seed=None, rng=None, eps: float = 1e-12) -> Tensor:
    """Mean over the batch of ``(||grad_x D(x)||_2 - 1)^2`` at random interpolates.

    ``x = alpha * real + (1 - alpha) * fake`` with one ``alpha ~ U[0,1)`` per
    sample. ``D`` maps a (B, ...) tensor to one score per sample. The result
    keeps its graph, so it can be differentiated with respect to ``D``'s
    parameters.
    """
    real = real if isinstance(real, Tensor) else Tensor(real)
    fake = fake if isinstance(fake, Tensor) else Tensor(fake)
    if real.shape != fake.shape:
        raise ValueError(f"real and fake batches differ in shape: {real.shape} vs {fake.shape}")
    rng = rng or np.random.default_rng(seed)
    alpha = rng.random((real.shape[0],) + (1,) * (real.ndim - 1)).astype(real.dtype)
    x = Tensor(alpha * real.data + (1 - alpha) * fake.data, requires_grad=True)
    scores = D(x)
    (g,) = grad(sum_(scores), [x], create_graph=True)
    norms = sqrt(sum_(g * g, tuple(range(1, g.ndim))) + eps)
    return mean((norms - 1.0) * (norms - 1.0))


@dataclass
class StepStats:
    wasserstein1: float
    wasserstein2: float
    gp1: float
    gp2: float
    g_loss: float

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())


def _apply(params, loss, opt):
    grads = grad(loss, params)
    for p, g in zip(params, grads):
        p.grad = g.data
    opt.step()


def _critic_update(model: EganModel, real_l: np.ndarray, real_f: np.ndarray, rng) -> tuple:
    cfg = model.cfg
    with no_grad():
        fake_l, fake_f = model.generator(model.noise(len(real_l)))
    rl, rf = Tensor(real_l), Tensor(real_f)
    w1 = mean(model.d1(rl)) - mean(model.d1(fake_l))
    w2 = mean(model.d2(rf)) - mean(model.d2(fake_f))
    gp1 = gradient_penalty(model.d1, rl, fake_l, rng=rng)
    gp2 = gradient_penalty(model.d2, rf, fake_f, rng=rng)
    loss = -(w1 + w2) + cfg.lambda1 * gp1 + cfg.lambda2 * gp2
    _apply(model.d1.parameters() + model.d2.parameters(), loss, model.opt_d)
    return float(w1.data), float(w2.data), float(gp1.data), float(gp2.data)


def egan_train_step(model: EganModel, real_l: np.ndarray, real_f: np.ndarray, rng) -> StepStats:
    """``n_critic`` critic updates on both critics, then one generator update.

    ``real_l`` (B, 2, N_T, N_grp) and ``real_f`` (B, 2, N_T, N_c) are paired
    real samples; ``rng`` draws minibatch rows and interpolation weights.
    """
    cfg = model.cfg
    model.train()
    stats = None
    for _ in range(cfg.n_critic):
        idx = rng.integers(0, len(real_l), min(cfg.batch_size, len(real_l)))
        stats = _critic_update(model, real_l[idx], real_f[idx], rng)
    x_gl, x_gf = model.generator(model.noise(min(cfg.batch_size, len(real_l))))
    g_loss = -(mean(model.d1(x_gl)) + mean(model.d2(x_gf)))
    _apply(model.generator.parameters(), g_loss, model.opt_g)
    out = StepStats(*stats, float(g_loss.data))
    if not out.finite():
        raise FloatingPointError(f"non-finite EGAN losses: {out}")
    return out


def real_pairs(Wtilde: np.ndarray, W: np.ndarray):
    """Complex (n, N_T, N_grp) and (n, N_T, N_c) matrices -> (n, 2, N_T, N) real planes."""
    def planes(M):
        return np.stack([M.real, M.imag], axis=1).astype(np.float32)
    return planes(np.asarray(Wtilde)), planes(np.asarray(W))


def train_egan(real_l: np.ndarray, real_f: np.ndarray, cfg: GanConfig, steps: int,
               seed: int = 0, model: EganModel | None = None, log_path=None,
               checkpoint_path=None) -> tuple[EganModel, list]:
    """Run ``steps`` generator steps; returns the model and per-step statistics."""
    model = model or EganModel(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    history = []
    last = None
    start = time.perf_counter()
    fh = open(log_path, "w", newline="") if log_path else None
    try:
        writer = csv.writer(fh) if fh else None
        if writer:
            writer.writerow(["step", "wasserstein1", "wasserstein2", "gp1", "gp2", "g_loss", "wall_seconds"])
        for step in range(steps):
            try:
                stats = egan_train_step(model, real_l, real_f, rng)
            except FloatingPointError as exc:
                raise FloatingPointError(f"{exc}; step {step}, last finite statistics {last}") from exc
            history.append(stats)
            last = stats
            if writer:
                writer.writerow([step, *asdict(stats).values(), time.perf_counter() - start])
    finally:
        if fh:
            fh.close()
    if checkpoint_path:
        save_egan(checkpoint_path, model)
    return model, history


def critic_ascent(model: EganModel, real_l: np.ndarray, real_f: np.ndarray, steps: int,
                  seed: int = 0) -> list:
    """Train only the critics against a frozen generator; returns W1 + W2 per step."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    model.train()
    out = []
    for _ in range(steps):
        idx = rng.integers(0, len(real_l), min(model.cfg.batch_size, len(real_l)))
        w1, w2, _, _ = _critic_update(model, real_l[idx], real_f[idx], rng)
        out.append(w1 + w2)
    return out


def egan_sample(generator: Generator, n: int, seed: int, batch: int = 250):
    """Draw ``n`` paired samples with batch-norm running statistics.

    Returns complex arrays (n, N_T, N_grp) and (n, N_T, N_c).
    """
    cfg = generator.cfg
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    was = generator.training
    generator.eval()
    lows, fulls = [], []
    try:
        with no_grad():
            for s in range(0, n, batch):
                z = Tensor(rng.standard_normal((min(batch, n - s), cfg.l_z)))
                x_gl, x_gf = generator(z)
                lows.append(x_gl.data[:, 0] + 1j * x_gl.data[:, 1])
                fulls.append(x_gf.data[:, 0] + 1j * x_gf.data[:, 1])
    finally:
        generator.train(was)
    return np.concatenate(lows).astype(np.complex64), np.concatenate(fulls).astype(np.complex64)


def sample_dataset_files(generator: Generator, n: int, seed: int):
    """Generated pairs wrapped as synthetic eigenvector-CSI DatasetFiles."""
    low, full = egan_sample(generator, n, seed)
    flags = FLAG_SYNTHETIC | FLAG_EIGEN
    return DatasetFile(low, seed, flags), DatasetFile(full, seed, flags)


def save_egan(path, model: EganModel) -> Path:
    return save_checkpoint(path, {"kind": "egan", "config": model.cfg.to_dict()}, model.state_dict())


def load_egan(path) -> EganModel:
    config, blobs = load_checkpoint(path)
    if config.get("kind") != "egan":
        raise ValueError(f"{path} is not an EGAN checkpoint")
    model = EganModel(GanConfig.from_dict(config["config"]))
    model.load_state_dict(blobs)
    return model
