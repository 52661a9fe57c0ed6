"""Command-line driver.

Every subcommand prints a JSON summary on stdout. Failures print
``{"error": ..., "message": ...}`` on stderr and exit nonzero (2 for usage or
configuration errors, 1 otherwise).
"""
from __future__ import annotations

import os

# single-threaded BLAS keeps reductions in a fixed order; must precede numpy import
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .channel import SCENARIOS, add_awgn, generate_dataset, load_scenario  # noqa: E402
from .codec import CodecConfig, CodecModel, TrainConfig, evaluate_codec, load_codec, save_codec, train_codec  # noqa: E402
from .config import ConfigError, coerce_fields, load_config  # noqa: E402
from .datafile import FLAG_EIGEN, DatasetFile, FormatError, read_dataset, write_dataset  # noqa: E402
from .egan import EganModel, GanConfig, load_egan, real_pairs, sample_dataset_files, save_egan, train_egan  # noqa: E402
from .experiment import ReadOnlyGuard, run_experiment  # noqa: E402
from .incorporation import full_eigen_csi, incorporate, kdda_default  # noqa: E402
from .metrics import codec_complexity, egan_complexity  # noqa: E402

__all__ = ["main", "build_parser", "UsageError"]


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _pairs(items, cls, where):
    """``KEY=VALUE`` overrides coerced to the fields of dataclass ``cls``."""
    raw = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"{where}: expected KEY=VALUE, got '{item}'"])
        raw[key.strip()] = value.strip()
    errors = []
    out = coerce_fields(cls, raw, errors, where)
    if errors:
        raise ConfigError(errors)
    return out


def _read(path, guard: ReadOnlyGuard) -> DatasetFile:
    guard.add(path)
    return read_dataset(path)


def _channels(ds: DatasetFile, path) -> np.ndarray:
    if ds.is_eigen:
        raise ValueError(f"{path} holds eigenvector CSI, expected channel samples")
    return ds.data


def cmd_generate_data(args):
    if args.scenario in SCENARIOS:
        scenario = SCENARIOS[args.scenario]
    else:
        scenario = load_scenario(args.scenario)
    if args.n_tx or args.n_rx or args.n_c:
        scenario = scenario.scaled(n_tx=args.n_tx, n_rx=args.n_rx, n_subcarriers=args.n_c)
    H = generate_dataset(scenario, args.samples, args.seed)
    if args.snr_db is not None:
        H = add_awgn(H, args.snr_db, args.seed)
    write_dataset(args.out, DatasetFile(H, args.seed))
    return {"out": str(args.out), "shape": list(H.shape), "scenario": scenario.name, "seed": args.seed}


def cmd_augment_kdda(args):
    with ReadOnlyGuard() as guard:
        ds = _read(args.input, guard)
        H = _channels(ds, args.input)
        aug = kdda_default(H, args.n_gr, tuple(args.granularities))   # (n, k, N_T, N_grp)
        n, k = aug.shape[:2]
        low = aug.reshape(n * k, *aug.shape[2:])
        full = np.repeat(full_eigen_csi(H), k, axis=0)
        if args.include_original:
            low = np.concatenate([incorporate(H, args.n_gr), low])
            full = np.concatenate([full_eigen_csi(H), full])
        write_dataset(args.out_low, DatasetFile(low, ds.seed, FLAG_EIGEN))
        if args.out_full:
            write_dataset(args.out_full, DatasetFile(full, ds.seed, FLAG_EIGEN))
    return {"out_low": str(args.out_low), "per_sample": k, "count": len(low)}


def _codec_pairs(H, n_gr):
    return incorporate(H, n_gr), full_eigen_csi(H)


def cmd_train_codec(args):
    with ReadOnlyGuard() as guard:
        H_tr = _channels(_read(args.train, guard), args.train)
        H_va = _channels(_read(args.val, guard), args.val)
        Wb, W = _codec_pairs(H_tr, args.n_gr)
        if args.extra_low:
            if not args.extra_full:
                raise UsageError("--extra-low needs --extra-full")
            Wb = np.concatenate([Wb, _read(args.extra_low, guard).matrices()])
            W = np.concatenate([W, _read(args.extra_full, guard).matrices()])
        overrides = _pairs(args.codec, CodecConfig, "codec")
        cfg = CodecConfig(n_tx=H_tr.shape[2], n_c=H_tr.shape[3], n_gr=args.n_gr, **overrides)
        tcfg = TrainConfig(batch_size=args.batch_size, lr=args.lr, patience=args.patience, epochs=args.epochs,
                           max_steps=args.max_steps, seed=args.seed, quantize=not args.no_quantize,
                           log_path=str(args.log) if args.log else None)
        result = train_codec((Wb, W), _codec_pairs(H_va, args.n_gr), cfg, tcfg)
        save_codec(args.out, result.model)
    return {"out": str(args.out), "best_val_gcs": result.best_val, "best_epoch": result.best_epoch,
            "steps": result.steps, "train_pairs": len(Wb)}


def cmd_train_egan(args):
    with ReadOnlyGuard() as guard:
        low = _read(args.low, guard).matrices()
        full = _read(args.full, guard).matrices()
        overrides = _pairs(args.gan, GanConfig, "gan")
        cfg = GanConfig(n_tx=low.shape[1], n_grp=low.shape[2], n_c=full.shape[2], seed=args.seed, **overrides)
        real_l, real_f = real_pairs(low, full)
        model, history = train_egan(real_l, real_f, cfg, args.steps, seed=args.seed, model=EganModel(cfg),
                                    log_path=args.log)
        save_egan(args.out, model)
    last = asdict(history[-1]) if history else {}
    return {"out": str(args.out), "steps": len(history), "last": last}


def cmd_sample_egan(args):
    with ReadOnlyGuard() as guard:
        guard.add(args.checkpoint)
        model = load_egan(args.checkpoint)
        low, full = sample_dataset_files(model.generator, args.n, args.seed)
        write_dataset(args.out_low, low)
        write_dataset(args.out_full, full)
    return {"out_low": str(args.out_low), "out_full": str(args.out_full), "count": args.n}


def cmd_evaluate(args):
    rows = []
    with ReadOnlyGuard() as guard:
        guard.add(args.checkpoint)
        model = load_codec(args.checkpoint)
        H = _channels(_read(args.test, guard), args.test)
        W = full_eigen_csi(H)
        for snr in args.snr_db:
            Wb = incorporate(add_awgn(H, snr, args.seed), model.cfg.n_gr)
            res = evaluate_codec(model, (Wb, W), quantize=not args.no_quantize)
            rows.append({"snr_db": snr, "bits": model.cfg.bits, "samples": len(H), "mean_gcs": res.mean})
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("snr_db,bits,samples,mean_gcs\n")
            for r in rows:
                snr = "inf" if math.isinf(r["snr_db"]) else repr(r["snr_db"])
                fh.write(f"{snr},{r['bits']},{r['samples']},{r['mean_gcs']!r}\n")
    return {"rows": [{**r, "snr_db": str(r["snr_db"])} for r in rows]}


def cmd_sweep(args):
    out = run_experiment(args.config, args.out, resume=args.resume)
    return {"out": str(out)}


def cmd_complexity_report(args):
    if args.config:
        cfg = load_config(args.config)
        codec_cfg, gan_cfg = cfg.codec, cfg.gan or GanConfig(
            n_tx=cfg.codec.n_tx, n_grp=cfg.codec.n_grp, n_c=cfg.codec.n_c)
    elif args.toy:
        codec_cfg, gan_cfg = CodecConfig.toy(), GanConfig.toy()
    else:
        codec_cfg, gan_cfg = CodecConfig.full(), GanConfig()
    report = codec_complexity(CodecModel(codec_cfg))
    if args.egan:
        report.components.extend(egan_complexity(EganModel(gan_cfg)).components)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "complexity.csv")
        report.to_json(out / "complexity.json")
    return json.loads(report.to_json())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iecsi", description="Incorporation-extrapolation CSI feedback laboratory.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate-data", help="draw synthetic channel samples")
    g.add_argument("--scenario", default="indoor-like", help="preset name or scenario file")
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-tx", type=int)
    g.add_argument("--n-rx", type=int)
    g.add_argument("--n-c", type=int)
    g.add_argument("--snr-db", type=float, help="add AWGN at this SNR")
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_generate_data)

    a = sub.add_parser("augment-kdda", help="mint augmented CSI matrices by subgrouping")
    a.add_argument("--input", type=Path, required=True)
    a.add_argument("--n-gr", type=int, default=16)
    a.add_argument("--granularities", type=_ints, default=[1, 2, 4, 8])
    a.add_argument("--include-original", action="store_true")
    a.add_argument("--out-low", type=Path, required=True)
    a.add_argument("--out-full", type=Path, help="paired full-band CSI of each source sample")
    a.set_defaults(func=cmd_augment_kdda)

    t = sub.add_parser("train-codec", help="train the feedback codec")
    t.add_argument("--train", type=Path, required=True)
    t.add_argument("--val", type=Path, required=True)
    t.add_argument("--extra-low", type=Path, help="extra incorporated CSI (augmented or synthetic)")
    t.add_argument("--extra-full", type=Path)
    t.add_argument("--n-gr", type=int, default=16)
    t.add_argument("--codec", action="append", metavar="KEY=VALUE")
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--no-quantize", action="store_true")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log", type=Path)
    t.add_argument("--out", type=Path, required=True)
    t.set_defaults(func=cmd_train_codec)

    e = sub.add_parser("train-egan", help="train the two-scale GAN on CSI pairs")
    e.add_argument("--low", type=Path, required=True)
    e.add_argument("--full", type=Path, required=True)
    e.add_argument("--steps", type=int, default=200)
    e.add_argument("--gan", action="append", metavar="KEY=VALUE")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--log", type=Path)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=cmd_train_egan)

    s = sub.add_parser("sample-egan", help="draw synthetic CSI pairs from a trained generator")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-low", type=Path, required=True)
    s.add_argument("--out-full", type=Path, required=True)
    s.set_defaults(func=cmd_sample_egan)

    v = sub.add_parser("evaluate", help="average GCS of a codec on test channels")
    v.add_argument("--checkpoint", type=Path, required=True)
    v.add_argument("--test", type=Path, required=True)
    v.add_argument("--snr-db", type=_floats, default=[math.inf])
    v.add_argument("--no-quantize", action="store_true")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path)
    v.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="run a full experiment from a config file")
    w.add_argument("config", type=Path)
    w.add_argument("--out", type=Path, required=True)
    w.add_argument("--resume", action="store_true")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("complexity-report", help="parameter and MAC counts without training")
    c.add_argument("--config", type=Path)
    c.add_argument("--toy", action="store_true")
    c.add_argument("--egan", action="store_true", help="include generator and critics")
    c.add_argument("--out-dir", type=Path)
    c.set_defaults(func=cmd_complexity_report)
    return p


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["errors"] = exc.errors
    if isinstance(exc, FormatError):
        payload["offset"] = exc.offset
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        result = args.func(args)
    except (UsageError, ConfigError) as exc:
        return _fail(exc, 2)
    except Exception as exc:  # surfaced as JSON, never as a traceback
        return _fail(exc, 1)
    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
