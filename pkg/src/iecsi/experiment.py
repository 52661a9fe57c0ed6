"""End-to-end experiment driver writing a self-describing result directory.

Layout of a result directory::

    manifest.json            config, seeds, dataset hashes, code version, completed runs
    data/{train,val,test}.csib
    checkpoints/codec-<tag>.iefm, egan-<tag>.iefm
    logs/codec-<tag>.csv, egan-<tag>.csv
    eval/results.csv         one row per (seed, variant, samples, bits, snr)
    eval/summary.csv         mean and standard deviation over seeds
    eval/paired.csv          KDDA vs no augmentation, matched by seed
    eval/correlation.csv     adjacent GCS of the test channels per granularity
    complexity.csv, complexity.json

Run tags look like ``s0-n100-b256-kdda``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import add_awgn, generate_dataset
from .codec import CodecModel, evaluate_codec, load_codec, save_codec, train_codec
from .config import ExperimentConfig, load_config
from .datafile import DatasetFile, read_dataset, sha256, write_dataset
from .egan import EganModel, egan_sample, load_egan, real_pairs, save_egan, train_egan
from .incorporation import full_eigen_csi, incorporate, kdda_default
from .metrics import codec_complexity, correlation_report, egan_complexity

__all__ = ["SCHEMA_VERSION", "RESULT_COLUMNS", "run_experiment", "ReadOnlyGuard", "derived_seed"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RESULT_COLUMNS = ("seed", "variant", "collected_samples", "bits", "snr_db", "train_pairs", "mean_gcs")
SUMMARY_COLUMNS = ("variant", "collected_samples", "bits", "snr_db", "n_seeds", "mean_gcs", "std_gcs")
PAIRED_COLUMNS = ("seed", "collected_samples", "bits", "snr_db", "gcs_none", "gcs_kdda", "difference")

_ROLES = {"train": 1, "val": 2, "test": 3, "noise": 4}


def derived_seed(*parts: int) -> int:
    """A 32-bit seed derived from integer parts, stable across platforms."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _snr_key(snr: float) -> int:
    return 0 if math.isinf(snr) else 1 + int(round(snr * 1000)) % (2**31)


class ReadOnlyGuard:
    """Record SHA-256 digests of input files and verify them on exit."""

    def __init__(self, paths=()):
        self.digests = {}
        for p in paths:
            self.add(p)

    def add(self, path):
        path = Path(path)
        self.digests[str(path)] = sha256(path)

    def verify(self):
        changed = [p for p, d in self.digests.items() if sha256(p) != d]
        if changed:
            raise RuntimeError(f"input files were modified during the run: {changed}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.verify()
        return False


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


class _Manifest:
    def __init__(self, path: Path):
        self.path = path
        self.data = json.loads(path.read_text()) if path.exists() else {}

    def save(self):
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.path)


def _variants(cfg: ExperimentConfig) -> list:
    a = cfg.augmentation
    out = []
    if a.compare_none or not (a.kdda or a.egan):
        out.append("none")
    if a.kdda:
        out.append("kdda")
    if a.egan:
        out.append("kdda+egan" if a.kdda else "egan")
    return out


def _dataset(out: Path, manifest: _Manifest, cfg: ExperimentConfig, role: str, n: int, resume: bool,
             guard: ReadOnlyGuard) -> np.ndarray:
    path = out / "data" / f"{role}.csib"
    seed = derived_seed(cfg.seed, _ROLES[role])
    record = manifest.data.get("datasets", {}).get(role)
    if resume and path.exists() and record and record["sha256"] == sha256(path):
        guard.add(path)
        return read_dataset(path).data
    H = generate_dataset(cfg.scenario, n, seed)
    write_dataset(path, DatasetFile(H, seed))
    manifest.data.setdefault("datasets", {})[role] = {
        "path": str(path.relative_to(out)), "sha256": sha256(path), "seed": seed, "count": n}
    return H


def _training_pairs(variant, H, Wbar, W, cfg, synth):
    """Stack the collected pairs with the augmentation of ``variant``."""
    lows, fulls = [Wbar], [W]
    if "kdda" in variant:
        aug = kdda_default(H, cfg.n_gr, cfg.augmentation.kdda_granularities)   # (n, k, N_T, N_grp)
        k = aug.shape[1]
        lows.append(aug.reshape(-1, *aug.shape[2:]))
        fulls.append(np.repeat(W, k, axis=0))
    if "egan" in variant and synth is not None:
        lows.append(synth[0])
        fulls.append(synth[1])
    return np.concatenate(lows), np.concatenate(fulls)


def run_experiment(config_path, out_dir, resume: bool = False) -> Path:
    """Generate data, train every sweep cell, evaluate, and write reports.

    With ``resume`` an interrupted run continues: datasets whose hashes match
    the manifest are reused and finished runs load their checkpoints.
    """
    config_path = Path(config_path)
    cfg = load_config(config_path)
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not resume:
        raise FileExistsError(f"{out} already holds results; pass --resume to continue")
    for sub in ("data", "checkpoints", "logs", "eval"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(manifest_path)
    config_hash = sha256(config_path)
    if resume and manifest.data and manifest.data.get("config_sha256") != config_hash:
        raise ValueError("config changed since the interrupted run; refusing to resume")
    manifest.data.update({
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.to_dict(),
        "config_path": str(config_path),
        "config_sha256": config_hash,
        "seeds": {"experiment": cfg.seed, "training": list(cfg.seeds)},
    })
    manifest.data.setdefault("completed", [])

    with ReadOnlyGuard([config_path]) as guard:
        ev = cfg.evaluation
        H_tr = _dataset(out, manifest, cfg, "train", max(ev.collected_samples), resume, guard)
        H_va = _dataset(out, manifest, cfg, "val", ev.val_samples, resume, guard)
        H_te = _dataset(out, manifest, cfg, "test", ev.test_samples, resume, guard)
        manifest.save()

        W_tr, W_va, W_te = (full_eigen_csi(H) for H in (H_tr, H_va, H_te))
        Wb_tr, Wb_va = incorporate(H_tr, cfg.n_gr), incorporate(H_va, cfg.n_gr)
        test_inputs = {}
        for snr in ev.snr_db:
            noisy = add_awgn(H_te, snr, derived_seed(cfg.seed, _ROLES["noise"], _snr_key(snr)))
            test_inputs[snr] = incorporate(noisy, cfg.n_gr)

        rows = []
        for seed in cfg.seeds:
            for n in ev.collected_samples:
                H, Wb, W = H_tr[:n], Wb_tr[:n], W_tr[:n]
                synth = _egan_stage(out, manifest, cfg, seed, n, H, Wb, W, resume)
                for bits in ev.bits:
                    for variant in _variants(cfg):
                        tag = f"s{seed}-n{n}-b{bits}-{variant}"
                        pairs = _training_pairs(variant, H, Wb, W, cfg, synth)
                        model = _codec_run(out, manifest, cfg, tag, seed, bits, pairs, (Wb_va, W_va), resume)
                        for snr, Wb_te in test_inputs.items():
                            score = evaluate_codec(model, (Wb_te, W_te)).mean
                            rows.append({"seed": seed, "variant": variant, "collected_samples": n,
                                         "bits": bits, "snr_db": float(snr), "train_pairs": len(pairs[0]),
                                         "mean_gcs": score})
                            log.info("%s snr=%s gcs=%.4f", tag, snr, score)
        _write_reports(out, cfg, rows, H_te)
        manifest.data["artifacts"] = sorted(str(p.relative_to(out)) for p in out.rglob("*")
                                            if p.is_file() and p.name != "manifest.json")
        manifest.save()
    return out


def _codec_run(out, manifest, cfg, tag, seed, bits, pairs, val, resume) -> CodecModel:
    ckpt = out / "checkpoints" / f"codec-{tag}.iefm"
    if resume and tag in manifest.data["completed"] and ckpt.exists():
        log.info("resuming %s from checkpoint", tag)
        return load_codec(ckpt)
    run_cfg = replace(cfg.train, seed=derived_seed(seed, bits), log_path=str(out / "logs" / f"codec-{tag}.csv"),
                      checkpoint_path=None)
    codec_cfg = cfg.codec_for(bits)
    model = CodecModel(codec_cfg)
    result = train_codec(pairs, val, codec_cfg, run_cfg, model=model)
    save_codec(ckpt, result.model)
    manifest.data["completed"].append(tag)
    manifest.save()
    return result.model


def _egan_stage(out, manifest, cfg, seed, n, H, Wb, W, resume):
    if not cfg.augmentation.egan:
        return None
    tag = f"s{seed}-n{n}"
    ckpt = out / "checkpoints" / f"egan-{tag}.iefm"
    if resume and f"egan-{tag}" in manifest.data["completed"] and ckpt.exists():
        model = load_egan(ckpt)
    else:
        low, full = Wb, W
        if cfg.augmentation.kdda:
            low, full = _training_pairs("kdda", H, Wb, W, cfg, None)
        real_l, real_f = real_pairs(low, full)
        model = EganModel(replace(cfg.gan, seed=seed))
        model, _ = train_egan(real_l, real_f, model.cfg, cfg.augmentation.egan_steps, seed=seed, model=model,
                              log_path=out / "logs" / f"egan-{tag}.csv")
        save_egan(ckpt, model)
        manifest.data["completed"].append(f"egan-{tag}")
        manifest.save()
    return egan_sample(model.generator, cfg.augmentation.synthetic_samples, derived_seed(seed, n, 5))


def _write_reports(out: Path, cfg: ExperimentConfig, rows: list, H_test: np.ndarray):
    ev_dir = out / "eval"
    _write_csv(ev_dir / "results.csv", RESULT_COLUMNS, rows)

    groups = defaultdict(list)
    for r in rows:
        groups[(r["variant"], r["collected_samples"], r["bits"], r["snr_db"])].append(r["mean_gcs"])
    summary = [{"variant": k[0], "collected_samples": k[1], "bits": k[2], "snr_db": k[3], "n_seeds": len(v),
                "mean_gcs": float(np.mean(v)), "std_gcs": float(np.std(v))} for k, v in groups.items()]
    _write_csv(ev_dir / "summary.csv", SUMMARY_COLUMNS, summary)

    by_key = {(r["seed"], r["collected_samples"], r["bits"], r["snr_db"], r["variant"]): r["mean_gcs"] for r in rows}
    paired = []
    for (seed, n, bits, snr, variant), score in by_key.items():
        if variant == "none" and (seed, n, bits, snr, "kdda") in by_key:
            k = by_key[(seed, n, bits, snr, "kdda")]
            paired.append({"seed": seed, "collected_samples": n, "bits": bits, "snr_db": snr,
                           "gcs_none": score, "gcs_kdda": k, "difference": k - score})
    _write_csv(ev_dir / "paired.csv", PAIRED_COLUMNS, paired)

    n_c = H_test.shape[-1]
    grans = [g for g in (1, 2, 4, 8, 16, 32, 64, 128, 256) if n_c % g == 0 and n_c // g >= 2]
    correlation_report(H_test, grans).to_csv(ev_dir / "correlation.csv")

    report = codec_complexity(CodecModel(cfg.codec))
    if cfg.gan is not None:
        report.components.extend(egan_complexity(EganModel(cfg.gan)).components)
    report.to_csv(out / "complexity.csv")
    report.to_json(out / "complexity.json")

