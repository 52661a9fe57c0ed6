"""Frequency-correlation statistics, complexity accounting and the RVQ baseline."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec.loss import gcs_columns
from .incorporation import incorporate
from .tensor import Tensor
from .tensor.nn import Module, profile

__all__ = [
    "adjacent_gcs",
    "CorrelationReport",
    "correlation_report",
    "flops_fen",
    "flops_cen",
    "ComponentCost",
    "ComplexityReport",
    "profile_model",
    "codec_complexity",
    "egan_complexity",
    "rvq_codebook",
    "RvqResult",
    "rvq_feedback",
]


def adjacent_gcs(H: np.ndarray, n_gr: int, per_sample: bool = False):
    """Mean GCS between dominant eigenvectors of consecutive subcarrier groups.

    ``H`` is a (n, N_R, N_T, N_c) channel stack (or one sample). With
    ``per_sample`` the per-sample means are returned instead of the grand mean.
    """
    H = np.asarray(H)
    if H.ndim == 3:
        H = H[None]
    n_c = H.shape[-1]
    if n_c % n_gr:
        raise ValueError(f"n_gr={n_gr} does not divide N_c={n_c}")
    if n_c // n_gr < 2:
        raise ValueError(f"need at least two groups, got N_grp={n_c // n_gr}")
    Wbar = incorporate(H, n_gr)                                   # (n, N_T, N_grp)
    rho = gcs_columns(Wbar[..., :-1], Wbar[..., 1:])            # (n, N_grp - 1)
    means = rho.mean(axis=-1)
    return means if per_sample else float(means.mean())


@dataclass
class CorrelationReport:
    granularities: list
    values: list

    def rows(self):
        return [{"granularity": g, "adjacent_gcs": v} for g, v in zip(self.granularities, self.values)]

    def to_csv(self, path):
        _write_csv(path, ["granularity", "adjacent_gcs"], self.rows())


def correlation_report(H: np.ndarray, granularities=(1, 2, 4, 8, 16, 32, 64, 128, 256)) -> CorrelationReport:
    return CorrelationReport(list(granularities), [adjacent_gcs(H, g) for g in granularities])


def flops_fen(n_tx: int, n_gr: int, n_grp: int) -> int:
    """Multiply-accumulates of the extrapolation network: ``4 N_gr N_T N_grp^2``."""
    return 4 * n_gr * n_tx * n_grp * n_grp


def flops_cen(n_tx: int, n_grp: int, n_c: int, k: int) -> int:
    """Convolutional extrapolation baseline: ``2K N_T N_grp N_c + 2K N_T N_c^2``."""
    return 2 * k * n_tx * n_grp * n_c + 2 * k * n_tx * n_c * n_c


@dataclass
class ComponentCost:
    component: str
    params: int
    macs: int
    elementwise_ops: int


@dataclass
class ComplexityReport:
    """Per-component parameter and forward-pass cost; MACs count one multiply-add."""

    components: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(c.params for c in self.components)

    @property
    def total_macs(self) -> int:
        return sum(c.macs for c in self.components)

    @property
    def total_elementwise(self) -> int:
        return sum(c.elementwise_ops for c in self.components)

    def component(self, name: str) -> ComponentCost:
        for c in self.components:
            if c.component == name:
                return c
        raise KeyError(name)

    def rows(self) -> list:
        rows = [asdict(c) for c in self.components]
        rows.append({"component": "total", "params": self.total_params, "macs": self.total_macs,
                     "elementwise_ops": self.total_elementwise})
        return rows

    def to_csv(self, path):
        _write_csv(path, ["component", "params", "macs", "elementwise_ops"], self.rows())

    def to_json(self, path=None) -> str:
        text = json.dumps({"components": self.rows(), "extras": self.extras}, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)


def profile_model(model: Module, run, components: dict) -> ComplexityReport:
    """Run ``run(model)`` once under the profiler and split the cost by component.

    ``components`` maps report names to ``(submodule, scope)`` where ``scope``
    is the submodule's attribute name as seen by the profiler. Parameters are
    counted from the submodule; MACs and elementwise ops from the scope.
    """
    was = model.training
    model.eval()
    try:
        with profile() as prof:
            run(model)
    finally:
        model.train(was)
    report = ComplexityReport()
    for name, (module, scope) in components.items():
        report.components.append(ComponentCost(name, module.num_parameters(), prof.total(scope),
                                               prof.elementwise_total(scope)))
    return report


def codec_complexity(model) -> ComplexityReport:
    """Single-sample cost of a CodecModel split into encoder, decoder and extrapolation."""
    cfg = model.cfg
    x = Tensor(np.zeros((1, cfg.d_model, cfg.n_grp)))
    comps = {"encoder": (model.encoder, "encoder"), "decoder": (model.decoder, "decoder")}
    if model.fen is not None:
        comps["extrapolation"] = (model.fen, "fen")
    report = profile_model(model, lambda m: m(x, quantize=True), comps)
    report.extras = {
        "flops_fen": flops_fen(cfg.n_tx, cfg.n_gr, cfg.n_grp),
        "flops_cen_k3": flops_cen(cfg.n_tx, cfg.n_grp, cfg.n_c, 3),
        "cen_over_fen_k3": flops_cen(cfg.n_tx, cfg.n_grp, cfg.n_c, 3) / flops_fen(cfg.n_tx, cfg.n_gr, cfg.n_grp),
        "feedback_bits": cfg.bits,
        "l_q": cfg.l_q,
    }
    return report


def egan_complexity(model) -> ComplexityReport:
    """Single-sample cost of the EGAN generator and both critics."""
    def run(m):
        x_gl, x_gf = m.generator(m.noise(1, np.random.default_rng(0)))
        m.d1(x_gl)
        m.d2(x_gf)
    return profile_model(model, run, {"generator": (model.generator, "generator"),
                                      "discriminator1": (model.d1, "d1"),
                                      "discriminator2": (model.d2, "d2")})


def rvq_codebook(n_tx: int, bits: int, seed: int) -> np.ndarray:
    """``2^bits`` i.i.d. unit-norm complex Gaussian codewords, shape (2^bits, N_T)."""
    if bits < 1:
        raise ValueError("per-group RVQ budget must be at least one bit")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    c = rng.standard_normal((1 << bits, n_tx)) + 1j * rng.standard_normal((1 << bits, n_tx))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


@dataclass
class RvqResult:
    W_hat: np.ndarray
    indices: np.ndarray
    gcs: np.ndarray

    @property
    def mean_gcs(self) -> float:
        return float(self.gcs.mean())


def rvq_feedback(Wbar: np.ndarray, bits: int, seed: int, codebook: np.ndarray | None = None) -> RvqResult:
    """Per-group random vector quantization with ``B / N_grp`` bits per column.

    Every column is replaced by the codeword of a shared seeded codebook that
    maximizes GCS with it. ``gcs`` holds per-sample averages over columns.
    """
    Wbar = np.asarray(Wbar)
    n_tx, n_grp = Wbar.shape[-2:]
    if bits % n_grp:
        raise ValueError(f"B={bits} is not divisible by N_grp={n_grp}")
    b = bits // n_grp
    if b == 0:
        raise ValueError("per-group RVQ budget is zero bits")
    C = rvq_codebook(n_tx, b, seed) if codebook is None else np.asarray(codebook)
    corr = np.abs(np.einsum("kt,...tj->...kj", C.conj(), Wbar))   # (..., 2^b, N_grp)
    idx = corr.argmax(axis=-2)
    W_hat = np.moveaxis(C[idx], -1, -2)                            # (..., N_T, N_grp)
    per = gcs_columns(Wbar, W_hat).mean(axis=-1)
    return RvqResult(W_hat, idx, np.atleast_1d(per))
