"""
Synthetic multipath MIMO-OFDM channels.

A parametric geometric model stands in for ray-traced scenario data. Each
sample is a sum of ``P`` plane-wave paths between two half-wavelength
uniform linear arrays; the delay spread controls how fast the channel
decorrelates across subcarriers.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "ArrayConfig",
    "OfdmConfig",
    "PathSet",
    "Scenario",
    "steering_vector",
    "generate_channel",
    "generate_dataset",
    "random_paths",
    "add_awgn",
    "load_scenario",
    "SCENARIOS",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ArrayConfig:
    n_tx: int = 32
    n_rx: int = 4

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError(f"antenna counts must be positive, got n_tx={self.n_tx}, n_rx={self.n_rx}")

    @property
    def gan_compatible(self) -> bool:
        return _is_pow2(self.n_tx) and _is_pow2(self.n_rx) and self.n_tx >= 2


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int = 1024
    bandwidth: float = 100e6
    carrier_frequency: float = 3.5e9

    def __post_init__(self):
        if not _is_pow2(self.n_subcarriers):
            raise ValueError(f"n_subcarriers must be a power of two, got {self.n_subcarriers}")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def spacing(self) -> float:
        return self.bandwidth / self.n_subcarriers

    def frequencies(self) -> np.ndarray:
        """Baseband offset of every subcarrier, ``i * spacing`` for i = 0..N_c-1."""
        return np.arange(self.n_subcarriers) * self.spacing


@dataclass
class PathSet:
    """Path parameters: complex gains, departure/arrival angles (rad), delays (s)."""

    gains: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        self.aod = np.atleast_1d(np.asarray(self.aod, dtype=np.float64))
        self.aoa = np.atleast_1d(np.asarray(self.aoa, dtype=np.float64))
        self.delays = np.atleast_1d(np.asarray(self.delays, dtype=np.float64))
        n = len(self.gains)
        if n < 1:
            raise ValueError("a PathSet needs at least one path")
        if not (len(self.aod) == len(self.aoa) == len(self.delays) == n):
            raise ValueError("path parameter arrays must have equal length")
        if np.any(self.delays < 0):
            raise ValueError("path delays must be non-negative")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("path gains must be finite")

    def __len__(self):
        return len(self.gains)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to draw a dataset of random channels.

    With ``clusters = 0`` the ``n_paths`` paths are independent. With
    ``clusters > 0`` they are split evenly into clusters: each cluster has a
    delay drawn uniformly from ``[0, max_delay - cluster_delay_spread]`` and
    one departure/arrival direction, and its rays add a uniform delay offset
    up to ``cluster_delay_spread`` and Gaussian angle jitter with standard
    deviation ``cluster_angle_spread``. The first cluster arrives at delay 0
    and, if ``dominant_cluster_db`` is set, carries that much more power than
    all other clusters together.
    """

    name: str = "custom"
    array: ArrayConfig = field(default_factory=ArrayConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    n_paths: int = 25
    max_delay: float = 50e-9
    # exponential power-delay profile, dB of power lost per 100 ns of excess delay
    pdp_decay_db_per_100ns: float = 3.0
    clusters: int = 0
    cluster_delay_spread: float = 0.0
    cluster_angle_spread: float = 0.0
    dominant_cluster_db: float | None = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.max_delay < 0:
            raise ValueError("max_delay must be non-negative")
        if self.clusters:
            if self.n_paths % self.clusters:
                raise ValueError(f"n_paths={self.n_paths} is not divisible by clusters={self.clusters}")
            if not 0 <= self.cluster_delay_spread <= self.max_delay:
                raise ValueError("cluster_delay_spread must lie in [0, max_delay]")

    def scaled(self, n_tx=None, n_rx=None, n_subcarriers=None) -> "Scenario":
        """Same scenario at a different size, keeping the subcarrier spacing."""
        arr = ArrayConfig(n_tx or self.array.n_tx, n_rx or self.array.n_rx)
        nc = n_subcarriers or self.ofdm.n_subcarriers
        ofdm = OfdmConfig(nc, self.ofdm.spacing * nc, self.ofdm.carrier_frequency)
        return replace(self, array=arr, ofdm=ofdm)


SCENARIOS = {
    "indoor-like": Scenario("indoor-like", ArrayConfig(32, 4), OfdmConfig(1024, 100e6, 60e9), 25, 50e-9),
    # five clusters of five rays with a dominant earliest cluster; see random_paths
    "outdoor-like": Scenario("outdoor-like", ArrayConfig(32, 4), OfdmConfig(1024, 100e6, 3.5e9), 25, 400e-9,
                             clusters=5, cluster_delay_spread=30e-9, cluster_angle_spread=0.03,
                             dominant_cluster_db=6.0),
}


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Unit-norm ULA response with half-wavelength spacing."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return np.exp(-1j * np.pi * k * np.sin(angle)) / np.sqrt(n)


def _steering_matrix(n: int, angles: np.ndarray) -> np.ndarray:
    k = np.arange(n)[:, None]
    return np.exp(-1j * np.pi * k * np.sin(angles)[None, :]) / np.sqrt(n)


def generate_channel(paths: PathSet, arr: ArrayConfig, ofdm: OfdmConfig) -> np.ndarray:
    """Frequency response ``H`` with shape (n_rx, n_tx, n_subcarriers).

    ``H_i = sum_p g_p a_R(aoa_p) a_T(aod_p)^H exp(-j 2 pi f_i tau_p)``.
    """
    a_r = _steering_matrix(arr.n_rx, paths.aoa)              # (N_R, P)
    a_t = _steering_matrix(arr.n_tx, paths.aod)              # (N_T, P)
    f = ofdm.frequencies()
    phase = np.exp(-2j * np.pi * np.outer(paths.delays, f))  # (P, N_c)
    weighted = paths.gains[:, None] * phase
    return np.einsum("rp,tp,pc->rtc", a_r, a_t.conj(), weighted, optimize=True)


def random_paths(scenario: Scenario, rng: np.random.Generator) -> PathSet:
    """Draw a PathSet: uniform angles, uniform delays, exponential PDP gains."""
    if scenario.clusters:
        return _clustered_paths(scenario, rng)
    p = scenario.n_paths
    aod = rng.uniform(-np.pi / 2, np.pi / 2, p)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, p)
    delays = rng.uniform(0.0, scenario.max_delay, p)
    power = _pdp(scenario, delays)
    return PathSet(_complex_gains(rng, power), aod, aoa, delays)


def _pdp(scenario: Scenario, delays: np.ndarray) -> np.ndarray:
    return 10.0 ** (-scenario.pdp_decay_db_per_100ns * (delays / 100e-9) / 10.0)


def _complex_gains(rng, power: np.ndarray) -> np.ndarray:
    power = power / power.sum()
    return np.sqrt(power / 2) * (rng.standard_normal(power.shape) + 1j * rng.standard_normal(power.shape))


def _clustered_paths(scenario: Scenario, rng: np.random.Generator) -> PathSet:
    c, per = scenario.clusters, scenario.n_paths // scenario.clusters
    cluster_delay = rng.uniform(0.0, scenario.max_delay - scenario.cluster_delay_spread, c)
    cluster_delay[0] = 0.0
    aod0 = rng.uniform(-np.pi / 2, np.pi / 2, c)
    aoa0 = rng.uniform(-np.pi / 2, np.pi / 2, c)
    delays = cluster_delay[:, None] + rng.uniform(0.0, scenario.cluster_delay_spread, (c, per))
    aod = aod0[:, None] + scenario.cluster_angle_spread * rng.standard_normal((c, per))
    aoa = aoa0[:, None] + scenario.cluster_angle_spread * rng.standard_normal((c, per))
    power = _pdp(scenario, delays)
    if scenario.dominant_cluster_db is not None and c > 1:
        k = 10.0 ** (scenario.dominant_cluster_db / 10.0)
        power[0] *= k * power[1:].sum() / power[0].sum()
    gains = _complex_gains(rng, power.ravel())
    return PathSet(gains, aod.ravel(), aoa.ravel(), delays.ravel())


def sample_rng(seed: int, index: int) -> np.random.Generator:
    # one independent stream per sample index, so any subset can be regenerated alone
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def generate_dataset(scenario: Scenario, n_samples: int, seed: int) -> np.ndarray:
    """Stack of ``n_samples`` channels, shape (n, N_R, N_T, N_c), complex64.

    Samples are stored in single precision, which is also the on-disk
    precision, so a written-then-read dataset equals the in-memory one.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    arr, ofdm = scenario.array, scenario.ofdm
    out = np.empty((n_samples, arr.n_rx, arr.n_tx, ofdm.n_subcarriers), dtype=np.complex64)
    for i in range(n_samples):
        paths = random_paths(scenario, sample_rng(seed, i))
        out[i] = generate_channel(paths, arr, ofdm)
    return out


def add_awgn(H: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Add circular complex Gaussian noise at the given per-element SNR.

    The noise variance is ``mean(|H|^2) / 10**(snr_db/10)``, measured over the
    whole array passed in. ``snr_db = inf`` returns an unchanged copy.
    """
    H = np.asarray(H)
    if np.isposinf(snr_db):
        return H.copy()
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    rng = np.random.default_rng(seed)
    signal = np.mean(np.abs(H) ** 2)
    sigma2 = signal / 10.0 ** (snr_db / 10.0)
    noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))
    return (H + noise).astype(H.dtype if np.iscomplexobj(H) else np.complex128)


_SCENARIO_KEYS = {
    "base": str,
    "name": str,
    "n_tx": int,
    "n_rx": int,
    "n_subcarriers": int,
    "bandwidth": float,
    "carrier_frequency": float,
    "n_paths": int,
    "max_delay": float,
    "pdp_decay_db_per_100ns": float,
    "clusters": int,
    "cluster_delay_spread": float,
    "cluster_angle_spread": float,
    "dominant_cluster_db": float,
}


def scenario_from_mapping(values: dict) -> Scenario:
    """Build a Scenario from string key/values, starting from ``base`` if given."""
    unknown = sorted(set(values) - set(_SCENARIO_KEYS))
    if unknown:
        raise ValueError(f"unknown scenario keys: {', '.join(unknown)}")
    parsed = {k: _SCENARIO_KEYS[k](v) for k, v in values.items()}
    base = SCENARIOS[parsed["base"]] if "base" in parsed else Scenario()
    arr = ArrayConfig(parsed.get("n_tx", base.array.n_tx), parsed.get("n_rx", base.array.n_rx))
    nc = parsed.get("n_subcarriers", base.ofdm.n_subcarriers)
    if "bandwidth" in parsed:
        bw = parsed["bandwidth"]
    else:
        bw = base.ofdm.spacing * nc
    ofdm = OfdmConfig(nc, bw, parsed.get("carrier_frequency", base.ofdm.carrier_frequency))
    kw = {f.name: parsed[f.name] for f in fields(Scenario)
          if f.name in parsed and f.name not in ("array", "ofdm")}
    return replace(base, array=arr, ofdm=ofdm, **kw)


def load_scenario(path) -> Scenario:
    """Read a plain ``key = value`` scenario file (``#`` comments allowed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string("[scenario]\n" + text)
    return scenario_from_mapping(dict(parser["scenario"]))
