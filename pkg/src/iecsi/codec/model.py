"""
Transformer compression/reconstruction networks and the frequency
extrapolation network.

Complex CSI matrices are handled in real form: a (N_T, N) complex matrix
becomes the (2 N_T, N) matrix ``[Re; Im]``. Its N columns are the tokens seen
by the Transformer (token dimension ``d_model = 2 N_T``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..tensor import Tensor, no_grad
from ..tensor import functional as F
from ..tensor.core import reshape, sigmoid
from ..tensor.nn import LayerNorm, Linear, Module, ModuleList, param
from .quantizer import straight_through

__all__ = [
    "CodecConfig",
    "positional_encoding",
    "MultiHeadSelfAttention",
    "TransformerLayer",
    "Encoder",
    "Decoder",
    "ExtrapolationNetwork",
    "CodecModel",
    "to_real",
    "to_complex",
    "extrapolation_index",
]


@dataclass(frozen=True)
class CodecConfig:
    """Sizes of the codec; ``d_model`` is always ``2 * n_tx``.

    ``mapping`` selects how EM outputs are placed on subcarriers:
    ``"interleaved"`` puts column j of module i on subcarrier ``j*n_gr + i``,
    ``"block"`` concatenates the modules' outputs one after another.
    """

    n_tx: int = 32
    n_c: int = 1024
    n_gr: int = 16
    d_ff: int = 256
    heads: int = 4
    dropout: float = 0.1
    n_com: int = 2
    n_rec: int = 2
    bits: int = 256
    q: int = 2
    mapping: str = "interleaved"
    extrapolate: bool = True
    positional: bool = True
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.n_c % self.n_gr:
            errors.append(f"n_gr={self.n_gr} does not divide n_c={self.n_c}")
        if self.bits % self.q:
            errors.append(f"bits={self.bits} not divisible by q={self.q}")
        if self.d_model % self.heads:
            errors.append(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.mapping not in ("interleaved", "block"):
            errors.append(f"unknown mapping {self.mapping!r}")
        if not 0 <= self.dropout < 1:
            errors.append("dropout must be in [0, 1)")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def d_model(self) -> int:
        return 2 * self.n_tx

    @property
    def n_grp(self) -> int:
        return self.n_c // self.n_gr

    @property
    def l_q(self) -> int:
        return self.bits // self.q

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown codec config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def full(cls, **overrides) -> "CodecConfig":
        """N_T=32, N_c=1024, N_gr=16, B=256 (the defaults)."""
        return cls(**overrides)

    @classmethod
    def toy(cls, **overrides) -> "CodecConfig":
        """N_T=8, N_c=64 with the FF width scaled to 4 * d_model."""
        base = dict(n_tx=8, n_c=64, n_gr=16, d_ff=64)
        base.update(overrides)
        return cls(**base)


def to_real(W: np.ndarray) -> np.ndarray:
    """(..., N_T, N) complex -> (..., 2 N_T, N) real ``[Re; Im]``."""
    return np.concatenate([W.real, W.imag], axis=-2)


def to_complex(X) -> np.ndarray:
    X = X.data if isinstance(X, Tensor) else np.asarray(X)
    n = X.shape[-2] // 2
    return X[..., :n, :] + 1j * X[..., n:, :]


def positional_encoding(n_tokens: int, d: int) -> np.ndarray:
    """Sinusoidal table: even columns ``sin(p / 10000^(2i/d))``, odd columns cos."""
    if n_tokens < 1 or d < 1:
        raise ValueError("n_tokens and d must be >= 1")
    pos = np.arange(n_tokens)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadSelfAttention(Module):
    def __init__(self, d: int, heads: int, rng):
        super().__init__()
        self.heads = heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.last_weights = None

    def _split(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        return reshape(x, (b, n, self.heads, d // self.heads)).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d // self.heads))
        att = F.softmax(scores, -1)
        self.last_weights = att.data
        ctx = reshape((att @ v).transpose(0, 2, 1, 3), (b, n, d))
        return self.out(ctx)


class TransformerLayer(Module):
    """MHSA -> add -> LN -> FF(GELU) -> add -> LN (post-norm)."""

    def __init__(self, d: int, d_ff: int, heads: int, dropout: float, rng):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ff1 = Linear(d, d_ff, rng)
        self.ff2 = Linear(d_ff, d, rng)
        self.norm2 = LayerNorm(d)
        self.p = dropout
        self.drop_rng = rng

    def forward(self, x: Tensor) -> Tensor:
        a = F.dropout(self.attn(x), self.p, self.drop_rng, self.training)
        x = self.norm1(x + a)
        h = F.dropout(self.ff2(F.gelu(self.ff1(x))), self.p, self.drop_rng, self.training)
        return self.norm2(x + h)


class Encoder(Module):
    """Tokens + PE -> N_com layers -> flatten -> linear -> sigmoid, giving v in (0,1)^L_q."""

    def __init__(self, cfg: CodecConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.layers = ModuleList(TransformerLayer(cfg.d_model, cfg.d_ff, cfg.heads, cfg.dropout, rng)
                                 for _ in range(cfg.n_com))
        self.head = Linear(cfg.n_grp * cfg.d_model, cfg.l_q, rng)
        self.pe = positional_encoding(cfg.n_grp, cfg.d_model) if cfg.positional else None

    def forward(self, x: Tensor) -> Tensor:
        """``x``: (B, 2 N_T, N_grp) real form of W-bar."""
        cfg = self.cfg
        if x.shape[1:] != (cfg.d_model, cfg.n_grp):
            raise ValueError(f"encoder expects (B, {cfg.d_model}, {cfg.n_grp}) input, got {x.shape}")
        h = x.transpose(0, 2, 1)
        if self.pe is not None:
            h = h + Tensor._wrap(self.pe.astype(h.dtype))
        for layer in self.layers:
            h = layer(h)
        return sigmoid(self.head(reshape(h, (h.shape[0], -1))))


class Decoder(Module):
    """Linear expansion to N_grp tokens -> + PE -> N_rec layers -> (B, 2 N_T, N_grp)."""

    def __init__(self, cfg: CodecConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.head = Linear(cfg.l_q, cfg.n_grp * cfg.d_model, rng)
        self.layers = ModuleList(TransformerLayer(cfg.d_model, cfg.d_ff, cfg.heads, cfg.dropout, rng)
                                 for _ in range(cfg.n_rec))
        self.pe = positional_encoding(cfg.n_grp, cfg.d_model) if cfg.positional else None

    def forward(self, v: Tensor) -> Tensor:
        cfg = self.cfg
        if v.shape[-1] != cfg.l_q:
            raise ValueError(f"decoder expects feedback vectors of length {cfg.l_q}, got {v.shape[-1]}")
        h = reshape(self.head(v), (v.shape[0], cfg.n_grp, cfg.d_model))
        if self.pe is not None:
            h = h + Tensor._wrap(self.pe.astype(h.dtype))
        for layer in self.layers:
            h = layer(h)
        return h.transpose(0, 2, 1)


def extrapolation_index(n_gr: int, n_grp: int, mapping: str = "interleaved") -> np.ndarray:
    """``table[i, j]`` = subcarrier receiving column j of extrapolation module i."""
    i, j = np.meshgrid(np.arange(n_gr), np.arange(n_grp), indexing="ij")
    if mapping == "interleaved":
        return j * n_gr + i
    if mapping == "block":
        return i * n_grp + j
    raise ValueError(f"unknown mapping {mapping!r}")


class ExtrapolationNetwork(Module):
    """N_gr residual modules, each recovering one subcarrier offset per group.

    Module i computes ``LN(GELU(X K1_i + b1_i) K2_i + b2_i + X) * g_i + l_i``
    with the layer norm over the group axis. All modules run as one batched
    matmul; parameters are stacked along a leading module axis.
    """

    def __init__(self, n_gr: int, n_grp: int, rng, mapping: str = "interleaved", eps: float = 1e-5):
        super().__init__()
        self.n_gr, self.n_grp, self.mapping, self.eps = n_gr, n_grp, mapping, eps
        bound = 1.0 / np.sqrt(n_grp)
        self.k1 = param(rng.uniform(-bound, bound, (n_gr, n_grp, n_grp)))
        self.b1 = param(rng.uniform(-bound, bound, (n_gr, 1, n_grp)))
        self.k2 = param(rng.uniform(-bound, bound, (n_gr, n_grp, n_grp)))
        self.b2 = param(rng.uniform(-bound, bound, (n_gr, 1, n_grp)))
        self.g = param(np.ones((n_gr, 1, n_grp)))
        self.l = param(np.zeros((n_gr, 1, n_grp)))
        extrapolation_index(n_gr, n_grp, mapping)  # validates mapping

    def modules_output(self, x: Tensor) -> Tensor:
        """(B, 2 N_T, N_grp) -> (B, N_gr, 2 N_T, N_grp), one slice per module."""
        if x.shape[-1] != self.n_grp:
            raise ValueError(f"extrapolation expects {self.n_grp} columns, got {x.shape[-1]}")
        xe = reshape(x, (x.shape[0], 1) + x.shape[1:])
        h = F.gelu(xe @ self.k1 + self.b1)
        y = h @ self.k2 + self.b2 + xe
        return F.layer_norm(y, self.g, self.l, self.eps)

    def forward(self, x: Tensor) -> Tensor:
        """(B, 2 N_T, N_grp) -> (B, 2 N_T, N_c)."""
        y = self.modules_output(x)
        b, n_gr, rows, n_grp = y.shape
        if self.mapping == "interleaved":
            y = y.transpose(0, 2, 3, 1)      # (B, rows, j, i) -> subcarrier j*N_gr + i
        else:
            y = y.transpose(0, 2, 1, 3)      # (B, rows, i, j) -> subcarrier i*N_grp + j
        return reshape(y, (b, rows, n_gr * n_grp))


class CodecModel(Module):
    """Encoder, straight-through quantizer, decoder and extrapolation network."""

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)
        self.uses_fen = cfg.extrapolate and cfg.n_gr > 1
        self.fen = ExtrapolationNetwork(cfg.n_gr, cfg.n_grp, rng, cfg.mapping) if self.uses_fen else None

    def encode(self, x: Tensor) -> Tensor:
        return self.encoder(x)

    def decode(self, v: Tensor) -> Tensor:
        return self.decoder(v)

    def extrapolate(self, x: Tensor) -> Tensor:
        return self.fen(x) if self.fen is not None else x

    def forward(self, x: Tensor, quantize: bool = True) -> Tensor:
        """Real-form W-bar (B, 2 N_T, N_grp) -> real-form W-hat (B, 2 N_T, N_c)."""
        v = self.encode(x)
        if quantize:
            v = straight_through(v, self.cfg.q)
        return self.extrapolate(self.decode(v))

    def reconstruct(self, Wbar: np.ndarray, quantize: bool = True) -> np.ndarray:
        """Complex convenience wrapper in eval mode: (B, N_T, N_grp) -> (B, N_T, N_c)."""
        was = self.training
        self.eval()
        try:
            with no_grad():
                x = Tensor(to_real(np.asarray(Wbar)))
                return to_complex(self.forward(x, quantize))
        finally:
            self.train(was)

    def feedback_vector(self, Wbar: np.ndarray) -> np.ndarray:
        """Encoder output v in (0,1)^L_q for each sample (eval mode)."""
        was = self.training
        self.eval()
        try:
            with no_grad():
                return self.encode(Tensor(to_real(np.asarray(Wbar)))).data
        finally:
            self.train(was)

