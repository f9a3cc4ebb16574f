"""Command-line entry point: dataset generation, training in all modes,
source pre-training, evaluation, and the live annotation service.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
from pathlib import Path

import numpy as np

from .dataio import SynthConfig, gen_synthetic, load_dataset, write_dataset
from .errors import ConfigError, DataError, ModsepError, NumericAbort
from .losses import LossWeights
from .mae import dump_delta_curve
from .mdi import dump_partition
from .model import ModelParams, load_checkpoint, save_checkpoint
from .numcore import SgdConfig
from .trainer import (HiddenLabelOracle, TrainConfig, Trainer,
                      pretrain_source)

# keys accepted in a --config JSON file (flat); flags override these
_CONFIG_KEYS = {
    "mode", "max_epoch", "batch_size", "seed", "d_b", "tau",
    "separator_noise", "alpha", "beta", "gamma", "h", "lr0", "momentum",
    "weight_decay", "anneal_power", "anneal_scale", "debias_m", "debias_eta",
    "budget", "round_fraction", "m_pct", "late_start",
    "centroid_switch_epoch", "w_star_override", "mae_slope_total",
    "checkpoint", "data", "oracle", "annotation_timeout", "host", "port",
}


def _load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _effective(args, defaults: dict) -> dict:
    """Merge precedence: flags > config file > defaults."""
    eff = dict(defaults)
    if getattr(args, "config", None):
        eff.update(_load_config_file(args.config))
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            eff[key] = val
    return eff


def _train_config(eff: dict) -> TrainConfig:
    return TrainConfig(
        mode=eff["mode"], max_epoch=int(eff["max_epoch"]),
        batch_size=int(eff["batch_size"]), seed=int(eff["seed"]),
        d_b=int(eff["d_b"]), tau=float(eff["tau"]),
        separator_noise=float(eff["separator_noise"]),
        weights=LossWeights(alpha=float(eff["alpha"]), beta=float(eff["beta"]),
                            gamma=float(eff["gamma"]), h=float(eff["h"])),
        sgd=SgdConfig(lr0=float(eff["lr0"]), momentum=float(eff["momentum"]),
                      weight_decay=float(eff["weight_decay"]),
                      anneal_power=float(eff["anneal_power"]),
                      anneal_scale=float(eff["anneal_scale"])),
        debias_m=float(eff["debias_m"]), debias_eta=float(eff["debias_eta"]),
        budget=float(eff["budget"]),
        round_fraction=float(eff["round_fraction"]),
        m_pct=float(eff["m_pct"]),
        late_start=None if eff["late_start"] is None else int(eff["late_start"]),
        centroid_switch_epoch=None if eff["centroid_switch_epoch"] is None
        else int(eff["centroid_switch_epoch"]),
        w_star_override=None if eff["w_star_override"] is None
        else float(eff["w_star_override"]),
        mae_slope_total=bool(eff["mae_slope_total"]),
        checkpoint=eff["checkpoint"])


_TRAIN_DEFAULTS = dict(
    mode="uda", max_epoch=60, batch_size=32, seed=0, d_b=256, tau=0.01,
    separator_noise=0.0, alpha=1.0, beta=1.0, gamma=0.01, h=1.0, lr0=3e-3,
    momentum=0.9, weight_decay=1e-3, anneal_power=0.75, anneal_scale=10.0,
    debias_m=0.99, debias_eta=0.5, budget=0.0, round_fraction=0.5,
    m_pct=0.10, late_start=None, centroid_switch_epoch=None,
    w_star_override=None, mae_slope_total=False, checkpoint=None,
    oracle="hidden", annotation_timeout=600.0)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset dir or manifest")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--mode", choices=("uda", "ada", "sfada", "msda"))
    p.add_argument("--epochs", dest="max_epoch", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--lr", dest="lr0", type=float)
    p.add_argument("--budget", type=float, help="annotation budget fraction")
    p.add_argument("--round-fraction", dest="round_fraction", type=float)
    p.add_argument("--m-pct", dest="m_pct", type=float)
    p.add_argument("--late-start", dest="late_start", type=int)
    p.add_argument("--centroid-switch", dest="centroid_switch_epoch", type=int)
    p.add_argument("--w-star", dest="w_star_override", type=float)
    p.add_argument("--checkpoint", help="source checkpoint (sfada)")
    p.add_argument("--oracle", choices=("hidden",))


def _write_run(out_dir: Path, eff: dict, report: dict, trainer) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(eff, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in report["history"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    slim = {k: v for k, v in report.items() if k != "history"}
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(slim, fh, indent=1, sort_keys=True)
        fh.write("\n")
    save_checkpoint(trainer.params, out_dir / "checkpoint")
    ev = trainer.evaluate(trainer.cfg.max_epoch)
    dump_partition(ev.partition, out_dir / "partition.jsonl")
    dump_delta_curve(ev.mae, out_dir / "delta_curve.csv")


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(k=args.k, d_v=args.dv, n_per_domain=args.n,
                      rotation_deg=args.rotation,
                      translation_norm=args.translation,
                      modality_offset_norm=args.offset,
                      noise_sigma=args.sigma, seed=args.seed)
    ds = gen_synthetic(cfg)
    manifest = write_dataset(ds, args.out)
    print(f"wrote {manifest} ({ds.num_classes} classes, d_v={ds.d_v}, "
          f"{args.n} samples/domain)")
    return 0


def cmd_train(args) -> int:
    eff = _effective(args, _TRAIN_DEFAULTS)
    eff["data"] = str(args.data)
    cfg = _train_config(eff)
    ds = load_dataset(args.data)
    oracle = None
    if cfg.mode in ("ada", "sfada"):
        if eff.get("oracle", "hidden") != "hidden":
            raise ConfigError("cmd train supports only the hidden-label "
                              "oracle; use `serve` for interactive rounds")
        oracle = HiddenLabelOracle(ds, ds.target_names()[0])
    trainer = Trainer(ds, cfg, oracle=oracle)
    report = trainer.run()
    _write_run(Path(args.out), eff, report, trainer)
    final = report["final"]
    print(f"done: acc_v={final['acc_v']} acc_l={final['acc_l']} "
          f"acc_ens={final['acc_ens']} (zero-shot {report['zero_shot_acc']})")
    return 0


def cmd_pretrain_source(args) -> int:
    ds = load_dataset(args.data)
    params, report = pretrain_source(
        ds, epochs=args.epochs, seed=args.seed, holdout=args.holdout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "checkpoint")
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"pretrained on {report['n_source']} source samples; "
          f"holdout: {report['holdout']}")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
    elif args.init_seed is not None:
        params = ModelParams(ds.d_v, ds.num_classes, ds.text_features,
                             tau=args.tau,
                             rng=np.random.default_rng(args.init_seed))
    else:
        raise ConfigError("eval needs --checkpoint or --init-seed")
    cfg = TrainConfig(mode="uda", max_epoch=1, tau=params.tau,
                      w_star_override=args.w_star)
    trainer = Trainer(ds, cfg)
    trainer.params = params
    ev = trainer.evaluate(0)
    counts = ev.partition.counts()
    print(f"acc_v={ev.acc_v} acc_l={ev.acc_l} acc_ens={ev.acc_ens} "
          f"w_star={ev.mae.w_star:.4f} ({ev.mae.source})")
    print(f"mdi: MI={counts['mi']} MS={counts['ms']} "
          f"UN-a={counts['un_a']} UN-e={counts['un_e']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dump_partition(ev.partition, out / "partition.jsonl")
        dump_delta_curve(ev.mae, out / "delta_curve.csv")
        with open(out / "eval.json", "w", encoding="utf-8") as fh:
            json.dump({"acc_v": ev.acc_v, "acc_l": ev.acc_l,
                       "acc_ens": ev.acc_ens, "w_star": ev.mae.w_star,
                       "w_source": ev.mae.source, "mdi_counts": counts,
                       "preds_l": ev.preds_l.tolist(),
                       "preds_v": ev.preds_v.tolist(),
                       "preds_ens": ev.preds_e.tolist()}, fh, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_serve(args) -> int:
    from .service import AnnotationBridge, ServiceOracle, start_service
    eff = _effective(args, _TRAIN_DEFAULTS)
    if eff["mode"] == "uda":    # serve exists for interactive annotation
        eff["mode"] = "ada"
    if eff["mode"] not in ("ada", "sfada"):
        raise ConfigError("serve supports only annotation modes (ada/sfada)")
    eff["data"] = str(args.data)
    cfg = _train_config(eff)
    ds = load_dataset(args.data)
    bridge = AnnotationBridge(ds.class_names,
                              annotation_timeout=float(
                                  eff.get("annotation_timeout", 600.0)))
    try:
        server, _ = start_service(bridge, host=args.host, port=args.port)
    except OSError as e:
        print(f"cannot bind {args.host}:{args.port}: {e}", file=sys.stderr)
        return 1
    print(f"annotation service on http://{args.host}:"
          f"{server.server_address[1]}")
    trainer = Trainer(ds, cfg, oracle=ServiceOracle(bridge), hooks=bridge)
    out = Path(args.out)

    def finish(report=None):
        if report is not None:
            _write_run(out, eff, report, trainer)
        else:
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(trainer.params, out / "checkpoint")
        server.shutdown()

    def on_sigint(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGINT, on_sigint)
    try:
        report = trainer.run()
    except KeyboardInterrupt:
        print("interrupted; writing checkpoint")
        finish(None)
        return 0
    finish(report)
    print(f"done: {report['final']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modsep",
        description="modality-separated domain adaptation on frozen "
                    "vision-language features")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a synthetic benchmark")
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--dv", type=int, default=64)
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--rotation", type=float, default=15.0)
    g.add_argument("--translation", type=float, default=0.3)
    g.add_argument("--offset", type=float, default=0.4)
    g.add_argument("--sigma", type=float, default=0.15)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train in uda/ada/sfada/msda mode")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain-source", help="source-only pre-training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=0.1)
    p.set_defaults(func=cmd_pretrain_source)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--init-seed", dest="init_seed", type=int,
                   help="evaluate a fresh identity-initialized model")
    e.add_argument("--tau", type=float, default=0.01)
    e.add_argument("--w-star", dest="w_star", type=float)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="interactive ada with the annotation "
                                     "service")
    _add_train_flags(s)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8490)
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except NumericAbort as e:
        print(f"numeric abort: {e} (epoch={e.epoch}, batch={e.batch}, "
              f"losses={e.breakdown})", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ModsepError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
