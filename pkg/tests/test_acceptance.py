"""Acceptance criteria A1 to A11, one test each.

Every test prints a single ``A<n> PASS|FAIL <evidence>`` line (also with
output capture on) and then asserts at the stated tolerance.
"""
import csv
import time

import numpy as np
import pytest

from iecsi.channel import SCENARIOS, generate_dataset
from iecsi.codec import (
    CodecConfig,
    CodecModel,
    TrainConfig,
    codec_loss,
    evaluate_codec,
    gcs,
    train_codec,
)
from iecsi.codec.quantizer import dequantize, quantize
from iecsi.egan import Discriminator, EganModel, GanConfig, critic_ascent, egan_sample, real_pairs, train_egan
from iecsi.experiment import run_experiment
from iecsi.incorporation import (
    dominant_eigenvector,
    full_eigen_csi,
    incorporate,
    kdda_augment,
    kdda_default,
    phase_normalize,
)
from iecsi.metrics import codec_complexity, correlation_report, flops_cen, flops_fen
from iecsi.tensor import Tensor, default_dtype, gradcheck, no_grad, sum_
from iecsi.tensor import functional as F
from iecsi.tensor.core import matmul, reshape, sigmoid, tanh
from iecsi.tensor.functional import conv2d_weight_grad
from oracles import hermitian_top_eigvec

TOY = SCENARIOS["indoor-like"].scaled(n_tx=8, n_subcarriers=64)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def _T(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True, dtype=np.float64)


# -- A1 ----------------------------------------------------------------------
def _primitive_checks(r):
    x, y = _T(r.uniform(-2, 2, (3, 4))), _T(r.uniform(-2, 2, (3, 4)))
    img = _T(r.uniform(-1, 1, (2, 2, 6, 6)))
    k3, k4 = _T(r.uniform(-1, 1, (3, 2, 3, 3))), _T(r.uniform(-1, 1, (2, 3, 4, 4)))
    gout = _T(r.uniform(-1, 1, (2, 3, 6, 6)))
    gamma, beta = _T(r.uniform(0.5, 1.5, 4)), _T(r.uniform(-1, 1, 4))
    cases = {
        "add": (lambda: x + y, [x, y]),
        "mul": (lambda: x * y, [x, y]),
        "div": (lambda: x / (y * y + 1.0), [x, y]),
        "matmul": (lambda: matmul(x, y.T), [x, y]),
        "tanh": (lambda: tanh(x), [x]),
        "sigmoid": (lambda: sigmoid(x), [x]),
        "gelu": (lambda: F.gelu(x), [x]),
        "leaky_relu": (lambda: F.leaky_relu(x, 0.2), [x]),
        "softmax": (lambda: F.softmax(x, -1), [x]),
        "layer_norm": (lambda: F.layer_norm(x, gamma, beta), [x, gamma, beta]),
        "reshape": (lambda: reshape(x, (4, 3)), [x]),
        "exp_log_sqrt": (lambda: (x * x + 1.0).log() + (y * y + 1.0).sqrt() + x.exp(), [x, y]),
        "conv2d": (lambda: F.conv2d(img, k3, 2, 1), [img, k3]),
        "deconv2d": (lambda: F.deconv2d(img[:, :2], k4[:2, :2], 2, 1), [img, k4]),
        "conv2d_weight_grad": (lambda: conv2d_weight_grad(img, gout, (3, 3), 1, 1), [img, gout]),
    }
    worst = {}
    for name, (fn, inputs) in cases.items():
        w = Tensor._wrap(r.standard_normal(fn().shape))
        worst[name] = gradcheck(lambda: sum_(fn() * w), inputs)
    return worst


def test_a1_gradient_suite(report):
    start = time.perf_counter()
    r = np.random.default_rng(0)
    with default_dtype(np.float64):
        worst = _primitive_checks(r)

        cfg = CodecConfig(n_tx=2, n_c=16, n_gr=4, d_ff=8, heads=2, dropout=0.0, n_com=1, n_rec=1, bits=8, q=2)
        model = CodecModel(cfg).cast(np.float64)
        model.eval()
        Wb = r.standard_normal((2, 4, 4))
        target = r.standard_normal((2, 4, 16))
        xin = _T(Wb)
        worst["codec_end_to_end"] = gradcheck(
            lambda: codec_loss(target, model(xin, quantize=False)), [xin] + model.parameters(), joint=True)

        critic = Discriminator(2, 1, np.random.default_rng(1)).cast(np.float64)
        critic.eval()
        xc = _T(r.standard_normal((2, 2, 8, 8)))
        worst["egan_critic"] = gradcheck(lambda: sum_(critic(xc) * critic(xc)), [xc] + critic.parameters(),
                                           joint=True)
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    report("A1", ok, f"{len(worst)} checks, worst rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")
    assert max(worst.values()) < 1e-4
    assert elapsed < 120


# -- A2 ----------------------------------------------------------------------
def test_a2_evd_oracle(report):
    r = np.random.default_rng(2)
    worst_gcs, worst_res, checked = 1.0, 0.0, 0
    for _ in range(1000):
        n = int(r.integers(2, 9))
        rank = int(r.integers(1, n + 1))
        A = r.standard_normal((n, rank)) + 1j * r.standard_normal((n, rank))
        R = A @ A.conj().T
        w, lam = dominant_eigenvector(R)
        worst_res = max(worst_res, np.linalg.norm(R @ w - lam * w) / max(lam, 1.0))
        w_ref, _, gap = hermitian_top_eigvec(R)
        if gap > 1e-6:
            checked += 1
            worst_gcs = min(worst_gcs, gcs(w, w_ref))
    ok = worst_gcs >= 1 - 1e-10 and worst_res <= 1e-8
    report("A2", ok, f"min GCS {worst_gcs:.15f} over {checked} gapped matrices, max scaled residual {worst_res:.2e}")
    assert worst_gcs >= 1 - 1e-10
    assert worst_res <= 1e-8


# -- A3 ----------------------------------------------------------------------
def test_a3_full_size_shapes(report):
    cfg = CodecConfig.full()
    codec = CodecModel(cfg)
    gan = EganModel(GanConfig())
    codec.eval()
    gan.eval()
    trace = []
    with no_grad():
        fen_out = codec.fen(Tensor(np.zeros((1, 64, 64))))
        x_gl = gan.generator.low(gan.noise(1), trace)
        x_gf = gan.generator.full(x_gl)
        f1, f2 = gan.d1.features(x_gl), gan.d2.features(x_gf)
    got = {
        "l_q": cfg.l_q,
        "fen": fen_out.shape[1:],
        "modules": codec.fen.n_gr,
        "x_gl": x_gl.shape[1:],
        "x_gf": x_gf.shape[1:],
        "pre": trace[0],
        "d1": f1.shape[1:],
        "d2": f2.shape[1:],
    }
    want = {"l_q": 128, "fen": (64, 1024), "modules": 16, "x_gl": (2, 32, 64), "x_gf": (2, 32, 1024),
            "pre": (512, 1, 2), "d1": (512, 1, 2), "d2": (512, 1, 32)}
    report("A3", got == want, str(got))
    assert got == want


# -- A4 ----------------------------------------------------------------------
def test_a4_complexity(report):
    rep = codec_complexity(CodecModel(CodecConfig.full()))
    fen = rep.component("extrapolation")
    ratio = flops_cen(32, 64, 1024, 3) / flops_fen(32, 16, 64)
    total = rep.total_macs
    ok = (fen.macs == flops_fen(32, 16, 64) == 8_388_608 and fen.params == 135_168 and ratio == 25.5
          and abs(total - 23.20e6) <= 0.25 * 23.20e6)
    report("A4", ok, f"FEN MACs {fen.macs}, params {fen.params}, CEN/FEN {ratio}, codec total {total / 1e6:.2f}M")
    assert fen.macs == flops_fen(32, 16, 64) == 8_388_608
    assert fen.params == 135_168
    assert ratio == 25.5
    assert abs(total - 23.20e6) <= 0.25 * 23.20e6


# -- A5 ----------------------------------------------------------------------
@pytest.mark.slow
def test_a5_overfit(report):
    # full size (N_T=32, N_c=1024): at the toy size N_grp=4 and the module layer norms cap GCS below 0.99
    H = generate_dataset(SCENARIOS["indoor-like"], 16, 1)
    pairs = (incorporate(H, 16), full_eigen_csi(H))
    start = time.perf_counter()
    res = train_codec(pairs, pairs, CodecConfig.full(bits=256),
                      TrainConfig(batch_size=16, max_steps=2000, epochs=2000, lr=1e-3, patience=100,
                                  target_gcs=0.99))
    elapsed = time.perf_counter() - start
    train_gcs = evaluate_codec(res.model, pairs).mean
    ok = train_gcs >= 0.99 and res.steps <= 2000 and elapsed < 7200
    report("A5", ok, f"train GCS {train_gcs:.4f} after {res.steps} steps, {elapsed:.0f}s (full size)")
    assert train_gcs >= 0.99
    assert res.steps <= 2000
    assert elapsed < 7200


# -- A6 ----------------------------------------------------------------------
def test_a6_kdda_combinatorics(report):
    H = generate_dataset(TOY.scaled(n_subcarriers=256), 3, 4)
    counts = kdda_default(H, 16).shape[1]
    same = kdda_augment(H, 16, 16)[:, 0]
    exact = np.array_equal(phase_normalize(same, axis=-2), phase_normalize(incorporate(H, 16), axis=-2))
    ok = counts == 30 and exact
    report("A6", ok, f"{counts} augmented matrices per sample, N_sgr=N_gr bit-exact: {exact}")
    assert counts == 30
    assert exact


# -- A7 ----------------------------------------------------------------------
def _a7_seed(seed, steps=1500):
    H = generate_dataset(TOY, 100, 100 + seed)
    Hv, Ht = generate_dataset(TOY, 50, 200 + seed), generate_dataset(TOY, 200, 300 + seed)
    Wb, W = incorporate(H, 16), full_eigen_csi(H)
    aug = kdda_default(H, 16)
    k = aug.shape[1]
    kdda = (np.concatenate([Wb, aug.reshape(-1, *aug.shape[2:])]), np.concatenate([W, np.repeat(W, k, 0)]))
    val = (incorporate(Hv, 16), full_eigen_csi(Hv))
    test = (incorporate(Ht, 16), full_eigen_csi(Ht))
    scores = {}
    for name, train in (("none", (Wb, W)), ("kdda", kdda)):
        res = train_codec(train, val, CodecConfig.toy(seed=seed),
                          TrainConfig(batch_size=32, max_steps=steps, epochs=10**6, seed=seed, patience=20))
        scores[name] = evaluate_codec(res.model, test).mean
    return scores


@pytest.mark.slow
def test_a7_augmentation_benefit(report):
    runs = [_a7_seed(s) for s in range(3)]
    none = np.array([r["none"] for r in runs])
    kdda = np.array([r["kdda"] for r in runs])
    ok = kdda.mean() > none.mean() and np.all(kdda >= none - 0.005)
    report("A7", ok, f"mean GCS kdda {kdda.mean():.4f} vs none {none.mean():.4f}; "
                     f"per-seed gains {np.round(kdda - none, 4).tolist()}")
    assert kdda.mean() > none.mean()
    assert np.all(kdda >= none - 0.005)


# -- A8 ----------------------------------------------------------------------
@pytest.mark.slow
def test_a8_egan_smoke(report):
    cfg = GanConfig.toy()
    H = generate_dataset(TOY, 100, 8)
    real_l, real_f = real_pairs(incorporate(H, cfg.n_gr), full_eigen_csi(H))
    model, history = train_egan(real_l, real_f, cfg, 200, seed=0)
    finite = all(s.finite() for s in history)
    gp_ok = all(s.gp1 >= 0 and s.gp2 >= 0 for s in history)
    start = time.perf_counter()
    low, full = egan_sample(model.generator, 1000, seed=1)
    sample_s = time.perf_counter() - start
    in_range = bool(np.all(np.abs(low.real) <= 1) and np.all(np.abs(low.imag) <= 1))
    w = critic_ascent(EganModel(cfg), real_l, real_f, 50, seed=0)
    rise = float(np.mean(w[-5:]) - np.mean(w[:5]))
    ok = finite and gp_ok and in_range and sample_s < 10 and len(low) == 1000 and rise > 0
    report("A8", ok, f"{len(history)} steps finite={finite} gp>=0={gp_ok}, X^GL in [-1,1]={in_range}, "
                     f"1000 samples in {sample_s:.2f}s, critic ascent W {w[0]:.3f} -> {w[-1]:.3f}")
    assert finite and gp_ok and in_range
    assert len(low) == 1000 and sample_s < 10
    assert rise > 0


# -- A9 ----------------------------------------------------------------------
def test_a9_quantizer(report):
    r = np.random.default_rng(9)
    worst, lengths, round_trip = {}, True, True
    for q in (1, 2, 3, 4):
        v = np.concatenate([r.random(20000), np.linspace(0, 1, 1001)])
        worst[q] = float(np.max(np.abs(v - dequantize(quantize(v, q)))) / 2.0 ** -(q + 1))
        s = quantize(v[:256 // q], q)
        lengths &= len(s) == (256 // q) * q
        idx = r.integers(0, 1 << q, 77)
        round_trip &= np.array_equal(quantize((idx + 0.5) / (1 << q), q).indices(), idx)
    b = quantize(r.random(128), 2)
    ok = max(worst.values()) <= 1 and lengths and round_trip and len(b) == 256
    report("A9", ok, f"max error / half step {max(worst.values()):.4f}, B=256 stream length {len(b)}, "
                     f"round trip {round_trip}")
    assert max(worst.values()) <= 1
    assert lengths and round_trip and len(b) == 256


# -- A10 ---------------------------------------------------------------------
def test_a10_frequency_correlation_trend(report):
    H = generate_dataset(SCENARIOS["outdoor-like"], 40, 10)
    values = np.array(correlation_report(H).values)
    drop = values[0] - values[-1]
    max_rise = float(np.max(np.diff(values)))
    ok = drop >= 0.02 and max_rise <= 0.005
    report("A10", ok, f"rho {np.round(values, 4).tolist()}, drop {drop:.4f}, max local rise {max_rise:.4f}")
    assert drop >= 0.02
    assert max_rise <= 0.005


# -- A11 ---------------------------------------------------------------------
A11_CONFIG = """
[experiment]
name = determinism
seed = 21
[scenario]
base = indoor-like
n_tx = 8
n_subcarriers = 64
[codec]
d_ff = 64
[augmentation]
kdda_granularities = 2, 4, 8
[training]
seeds = 0, 1
epochs = 3
batch_size = 16
[evaluation]
collected_samples = 8
val_samples = 4
test_samples = 8
bits = 64
snr_db = inf, 5
"""


def _losses(path):
    with open(path) as fh:
        return [(row["epoch"], row["train_loss"], row["val_gcs"]) for row in csv.DictReader(fh)]


def test_a11_determinism(report, tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(A11_CONFIG)
    a, b = run_experiment(cfg, tmp_path / "a"), run_experiment(cfg, tmp_path / "b")
    data = all((a / "data" / n).read_bytes() == (b / "data" / n).read_bytes()
               for n in ("train.csib", "val.csib", "test.csib"))
    logs = sorted(p.name for p in (a / "logs").glob("*.csv"))
    traj = bool(logs) and all(_losses(a / "logs" / n) == _losses(b / "logs" / n) for n in logs)
    evals = all((a / "eval" / n).read_bytes() == (b / "eval" / n).read_bytes()
                for n in ("results.csv", "summary.csv", "paired.csv"))
    ok = data and traj and evals
    report("A11", ok, f"datasets identical {data}, {len(logs)} loss trajectories identical {traj}, "
                      f"evaluation CSVs identical {evals}")
    assert data and traj and evals
