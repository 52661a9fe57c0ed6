"""Experiment configuration: a plain-text INI file validated before any compute.

Sections and keys (all optional except where noted)::

    [experiment]   name, seed, single_threaded
    [scenario]     base, n_tx, n_rx, n_subcarriers, bandwidth, ... (channel keys)
    [grouping]     n_gr
    [codec]        any CodecConfig field except n_tx, n_c and n_gr
    [augmentation] kdda, kdda_granularities, egan, egan_steps, synthetic_samples, gan_*
    [training]     seeds, epochs, max_steps, batch_size, lr, lr_decay, patience
    [evaluation]   collected_samples, val_samples, test_samples, bits, snr_db

List values are comma separated. ``snr_db`` accepts ``inf`` for the
noise-free path.
"""
from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .channel import SCENARIOS, Scenario, scenario_from_mapping
from .codec import CodecConfig, TrainConfig
from .egan import GanConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "coerce_fields"]


class ConfigError(ValueError):
    """Validation failure carrying every problem found, one string each."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def coerce_fields(cls, values: dict, errors: list, where: str) -> dict:
    """Convert string values to the annotated field types of dataclass ``cls``."""
    kinds = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        kind = kinds.get(key)
        if kind is None:
            errors.append(f"[{where}] unknown key '{key}'")
            continue
        try:
            if "bool" in str(kind):
                out[key] = _bool(raw)
            elif "int" in str(kind):
                out[key] = int(raw)
            elif "float" in str(kind):
                out[key] = float(raw)
            else:
                out[key] = raw
        except ValueError as exc:
            errors.append(f"[{where}] {key}: {exc}")
    return out


@dataclass
class Augmentation:
    kdda: bool = True
    kdda_granularities: tuple = (1, 2, 4, 8)
    # compare against the unaugmented baseline in every sweep cell
    compare_none: bool = True
    egan: bool = False
    egan_steps: int = 200
    synthetic_samples: int = 1000


@dataclass
class Evaluation:
    collected_samples: tuple = (100,)
    val_samples: int = 50
    test_samples: int = 200
    bits: tuple = (256,)
    snr_db: tuple = (math.inf,)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    single_threaded: bool = True
    scenario: Scenario = field(default_factory=lambda: SCENARIOS["indoor-like"])
    scenario_values: dict = field(default_factory=dict)
    n_gr: int = 16
    codec: CodecConfig = field(default_factory=CodecConfig)
    gan: GanConfig | None = None
    augmentation: Augmentation = field(default_factory=Augmentation)
    seeds: tuple = (0,)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: Evaluation = field(default_factory=Evaluation)

    def codec_for(self, bits: int) -> CodecConfig:
        d = self.codec.to_dict()
        d["bits"] = bits
        return CodecConfig.from_dict(d)

    def to_dict(self) -> dict:
        """JSON-safe snapshot for the manifest."""
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v
        return clean({
            "name": self.name,
            "seed": self.seed,
            "single_threaded": self.single_threaded,
            "scenario": self.scenario_values,
            "n_gr": self.n_gr,
            "codec": self.codec.to_dict(),
            "gan": self.gan.to_dict() if self.gan else None,
            "augmentation": asdict(self.augmentation),
            "seeds": list(self.seeds),
            "training": asdict(self.train),
            "evaluation": asdict(self.evaluation),
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


_SECTIONS = ("experiment", "scenario", "grouping", "codec", "augmentation", "training", "evaluation")
_TRAIN_KEYS = ("epochs", "max_steps", "batch_size", "lr", "lr_decay", "patience", "quantize", "target_gcs")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    errors = []
    for name in parser.sections():
        if name not in _SECTIONS:
            errors.append(f"unknown section [{name}]")
    sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in _SECTIONS}
    cfg = ExperimentConfig()

    exp = sec["experiment"]
    for key in set(exp) - {"name", "seed", "single_threaded"}:
        errors.append(f"[experiment] unknown key '{key}'")
    try:
        cfg.name = exp.get("name", cfg.name)
        cfg.seed = int(exp.get("seed", cfg.seed))
        cfg.single_threaded = _bool(exp.get("single_threaded", "true"))
    except ValueError as exc:
        errors.append(f"[experiment] {exc}")

    values = sec["scenario"] or {"base": "indoor-like"}
    if "base" in values and values["base"] not in SCENARIOS:
        errors.append(f"[scenario] base must be one of {sorted(SCENARIOS)}, got '{values['base']}'")
    else:
        try:
            cfg.scenario = scenario_from_mapping(values)
            cfg.scenario_values = dict(values)
        except (ValueError, TypeError) as exc:
            errors.append(f"[scenario] {exc}")

    grp = sec["grouping"]
    for key in set(grp) - {"n_gr"}:
        errors.append(f"[grouping] unknown key '{key}'")
    try:
        cfg.n_gr = int(grp.get("n_gr", cfg.n_gr))
    except ValueError as exc:
        errors.append(f"[grouping] {exc}")
    n_tx, n_c = cfg.scenario.array.n_tx, cfg.scenario.ofdm.n_subcarriers
    if cfg.n_gr < 1 or n_c % cfg.n_gr:
        errors.append(f"[grouping] n_gr={cfg.n_gr} must divide n_subcarriers={n_c}")

    codec_vals = dict(sec["codec"])
    for key in ("n_tx", "n_c", "n_gr"):
        if key in codec_vals:
            errors.append(f"[codec] '{key}' is derived from [scenario]/[grouping] and may not be set")
            codec_vals.pop(key)
    codec_kw = coerce_fields(CodecConfig, codec_vals, errors, "codec")
    try:
        cfg.codec = CodecConfig(n_tx=n_tx, n_c=n_c, n_gr=cfg.n_gr, **codec_kw)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        errors.append(f"[codec] {exc}")

    aug = dict(sec["augmentation"])
    gan_vals = {k[4:]: aug.pop(k) for k in list(aug) if k.startswith("gan_")}
    a = cfg.augmentation
    for key, raw in aug.items():
        try:
            if key in ("kdda", "egan", "compare_none"):
                setattr(a, key, _bool(raw))
            elif key == "kdda_granularities":
                a.kdda_granularities = _ints(raw)
            elif key in ("egan_steps", "synthetic_samples"):
                setattr(a, key, int(raw))
            else:
                errors.append(f"[augmentation] unknown key '{key}'")
        except ValueError as exc:
            errors.append(f"[augmentation] {key}: {exc}")
    for s in a.kdda_granularities:
        if s < 1 or cfg.n_gr % s:
            errors.append(f"[augmentation] kdda granularity {s} must divide n_gr={cfg.n_gr}")
    for key in ("n_tx", "n_grp", "n_c"):
        if key in gan_vals:
            errors.append(f"[augmentation] 'gan_{key}' is derived and may not be set")
            gan_vals.pop(key)
    gan_kw = coerce_fields(GanConfig, gan_vals, errors, "augmentation")
    if a.egan:
        try:
            cfg.gan = GanConfig(n_tx=n_tx, n_grp=n_c // max(cfg.n_gr, 1), n_c=n_c, **gan_kw)
        except (ValueError, TypeError) as exc:
            errors.append(f"[augmentation] EGAN: {exc}")

    tr = dict(sec["training"])
    if "seeds" in tr:
        try:
            cfg.seeds = _ints(tr.pop("seeds"))
        except ValueError as exc:
            errors.append(f"[training] seeds: {exc}")
    for key in set(tr) - set(_TRAIN_KEYS):
        errors.append(f"[training] unknown key '{key}'")
    train_kw = coerce_fields(TrainConfig, {k: v for k, v in tr.items() if k in _TRAIN_KEYS}, errors, "training")
    cfg.train = TrainConfig(**train_kw)
    if not cfg.seeds:
        errors.append("[training] seeds must list at least one seed")

    ev = cfg.evaluation
    parsers = {"collected_samples": _ints, "bits": _ints, "snr_db": _floats,
               "val_samples": int, "test_samples": int}
    for key, raw in sec["evaluation"].items():
        if key not in parsers:
            errors.append(f"[evaluation] unknown key '{key}'")
            continue
        try:
            setattr(ev, key, parsers[key](raw))
        except ValueError as exc:
            errors.append(f"[evaluation] {key}: {exc}")
    if any(n < 1 for n in ev.collected_samples) or not ev.collected_samples:
        errors.append("[evaluation] collected_samples must be positive")
    if ev.val_samples < 1 or ev.test_samples < 1:
        errors.append("[evaluation] val_samples and test_samples must be positive")
    for b in ev.bits:
        if b < 1 or b % cfg.codec.q:
            errors.append(f"[evaluation] bits={b} must be a positive multiple of q={cfg.codec.q}")
    if any(math.isnan(s) or s == -math.inf for s in ev.snr_db):
        errors.append("[evaluation] snr_db entries must be finite or inf")

    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    return parse_config(p.read_text())
