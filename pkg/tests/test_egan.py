import numpy as np
import pytest

from iecsi.datafile import read_dataset, sha256, write_dataset
from iecsi.egan import (
    Discriminator,
    EganModel,
    GanConfig,
    egan_sample,
    egan_train_step,
    gradient_penalty,
    load_egan,
    real_pairs,
    sample_dataset_files,
    save_egan,
)
from iecsi.incorporation import full_eigen_csi, incorporate
from iecsi.tensor import Tensor, gradcheck, mean, no_grad, sum_


@pytest.fixture(scope="module")
def toy_model():
    return EganModel(GanConfig.toy())


@pytest.mark.parametrize("n_tx, n_grp, n_c, depth", [(8, 16, 64, 2), (16, 32, 256, 3)])
def test_generator_shapes(n_tx, n_grp, n_c, depth):
    cfg = GanConfig(n_tx=n_tx, n_grp=n_grp, n_c=n_c, d_g=64, d_d1=8, d_d2=8)
    m = EganModel(cfg)
    m.eval()
    trace = []
    with no_grad():
        x_gl = m.generator.low(m.noise(2), trace)
        x_gf = m.generator.full(x_gl)
    assert cfg.n_g == depth
    assert x_gl.shape == (2, 2, n_tx, n_grp)
    assert x_gf.shape == (2, 2, n_tx, n_c)
    assert trace[0] == (64, 1, 2)


def test_full_size_generator_and_critic_shapes():
    cfg = GanConfig()
    assert (cfg.n_g, cfg.n_d1, cfg.n_d2) == (4, 4, 4)
    m = EganModel(cfg)
    m.eval()
    trace = []
    with no_grad():
        x_gl = m.generator.low(m.noise(1), trace)
        x_gf = m.generator.full(x_gl)
        f1 = m.d1.features(x_gl)
        f2 = m.d2.features(x_gf)
    assert trace[0] == (512, 1, 2)
    assert x_gl.shape[1:] == (2, 32, 64) and x_gf.shape[1:] == (2, 32, 1024)
    assert f1.shape[1:] == (512, 1, 2) and f2.shape[1:] == (512, 1, 32)


def test_generator_output_range(toy_model):
    low, full = egan_sample(toy_model.generator, 20, seed=1)
    assert np.all(np.abs(low.real) <= 1) and np.all(np.abs(low.imag) <= 1)
    assert full.shape == (20, 8, 64)


def test_sampling_is_seeded(toy_model, tmp_path):
    a = egan_sample(toy_model.generator, 10, seed=4)
    b = egan_sample(toy_model.generator, 10, seed=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert len({row.tobytes() for row in a[0]}) == 10
    fa = sample_dataset_files(toy_model.generator, 5, 2)[0]
    fb = sample_dataset_files(toy_model.generator, 5, 2)[0]
    assert fa.synthetic and fa.is_eigen
    assert sha256(write_dataset(tmp_path / "a", fa)) == sha256(write_dataset(tmp_path / "b", fb))
    np.testing.assert_array_equal(read_dataset(tmp_path / "a").matrices(), fa.matrices())


class _Linear:
    """Critic ``c * <u, x>`` with unit vector ``u``; its input gradient has norm c."""

    def __init__(self, shape, c, rng):
        u = rng.standard_normal(shape)
        self.u = Tensor(u / np.linalg.norm(u))
        self.c = c

    def __call__(self, x):
        return sum_(x * self.u, (1, 2, 3)) * self.c


@pytest.mark.parametrize("c, expected", [(1.0, 0.0), (0.0, 1.0), (2.0, 1.0)])
def test_gradient_penalty_examples(rng, f64, c, expected):
    real, fake = rng.standard_normal((4, 2, 4, 8)), rng.standard_normal((4, 2, 4, 8))
    gp = gradient_penalty(_Linear((2, 4, 8), c, rng), real, fake, seed=0)
    assert float(gp.data) == pytest.approx(expected, abs=1e-5)


def test_gradient_penalty_gradcheck_on_critic(f64, rng):
    D = Discriminator(2, 1, np.random.default_rng(0))
    D.eval()
    real, fake = rng.standard_normal((2, 2, 8, 8)), rng.standard_normal((2, 2, 8, 8))
    params = D.parameters()[:2]
    gradcheck(lambda: gradient_penalty(D, real, fake, seed=5), params)


def test_spectral_norm_bounds_singular_value(toy_model):
    toy_model.train()
    with no_grad():
        for _ in range(3):
            toy_model.d1(Tensor(np.zeros((1, 2, 8, 16))))
    for conv in toy_model.d1.convs:
        w = conv.normalized_weight().data
        sigma = np.linalg.svd(w.reshape(w.shape[0], -1), compute_uv=False)[0]
        assert sigma <= 1.01


def test_train_step_finite_and_gp_nonnegative(toy_channels):
    cfg = GanConfig.toy(n_critic=2, batch_size=4, d_g=64, d_d1=8, d_d2=8)
    m = EganModel(cfg)
    real_l, real_f = real_pairs(incorporate(toy_channels, 4), full_eigen_csi(toy_channels))
    rng = np.random.default_rng(0)
    for _ in range(3):
        s = egan_train_step(m, real_l, real_f, rng)
        assert s.finite() and s.gp1 >= 0 and s.gp2 >= 0


def test_checkpoint_round_trip(tmp_path):
    m = EganModel(GanConfig.toy(d_g=64, d_d1=8, d_d2=8, seed=2))
    m2 = load_egan(save_egan(tmp_path / "g.iefm", m))
    a, b = egan_sample(m.generator, 3, 0), egan_sample(m2.generator, 3, 0)
    np.testing.assert_array_equal(a[1], b[1])


def test_config_validation():
    with pytest.raises(ValueError, match="power of two"):
        GanConfig(n_tx=12)
    with pytest.raises(ValueError, match="d_g"):
        GanConfig.toy(d_g=6)


def test_critic_input_checked(toy_model):
    with pytest.raises(ValueError):
        toy_model.d1(Tensor(np.zeros((1, 3, 8, 16))))
    assert mean(toy_model.d1(Tensor(np.zeros((2, 2, 8, 16))))).shape == ()
