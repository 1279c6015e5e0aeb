"""Command-line driver: make data, train, downscale, score, plot.

One binary, subcommand style. Every subcommand resolves its configuration the
same way -- built-in defaults, then an optional ``--preset`` or ``--config``
file, then repeated ``--set section.key=value`` overrides (flags win) -- and
drops a ``config.yaml`` snapshot plus a ``manifest.json`` listing produced
files into its output directory, so a run can be reproduced from its own
artifacts. Exit status is 1 when a pipeline error fires, 0 otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .errors import ConfigurationError, WindscaleError
from .grids import SamplePair, load_any, load_field, load_pair, save_field, save_pair
from .infer import downscale_baseline, downscale_domain, downscale_tiled, trim_pair
from .metrics import (baseline_method, checkpoint_method, evaluate,
                      rapsd_curves, save_rapsd_csv, save_report, summary_table)
from .plots import plot_fieldmap, plot_rapsd, plot_validation_curves, plot_violin
from .runconfig import (PRESET_NAMES, RunConfig, apply_overrides, emit,
                        load_config, preset, save_config)
from .synth import make_dataset
from .train import fit, load_checkpoint


# ---------------------------------------------------------------- plumbing

def _resolve_config(args) -> RunConfig:
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise ConfigurationError("--preset and --config are mutually exclusive")
    if getattr(args, "preset", None):
        cfg = preset(args.preset)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    return apply_overrides(cfg, getattr(args, "set", None) or [])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_records(out_dir: Path, cfg: RunConfig, command: str,
                       outputs, extra: dict | None = None) -> None:
    """Config snapshot + manifest of produced files. Deliberately free of
    wall-clock fields so deterministic reruns produce identical records."""
    save_config(cfg, out_dir / "config.yaml")
    text = (out_dir / "config.yaml").read_text()
    manifest = {
        "command": command,
        "config": "config.yaml",
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "outputs": sorted(outputs),
        "versions": {"windscale": __version__, "numpy": np.__version__,
                     "torch": torch.__version__},
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_dataset(data_dir) -> dict[str, list[SamplePair]]:
    data_dir = Path(data_dir)
    splits_path = data_dir / "splits.txt"
    if not splits_path.exists():
        raise ConfigurationError(
            f"no splits.txt under {data_dir}; run synth-data first")
    buckets: dict[str, list[SamplePair]] = {"train": [], "val": [], "test": []}
    for line in splits_path.read_text().splitlines():
        if not line.strip():
            continue
        try:
            ts, split = line.split()
        except ValueError:
            raise ConfigurationError(f"bad splits.txt line: {line!r}") from None
        if split not in buckets:
            raise ConfigurationError(f"unknown split {split!r} in splits.txt")
        buckets[split].append(load_pair(data_dir / "pairs" / f"{ts}.npz"))
    return buckets


# ------------------------------------------------------------- subcommands

def cmd_synth_data(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    ds = make_dataset(cfg.synth)
    outputs = ["covariates.npz", "splits.txt"]
    save_field(out / "covariates.npz", ds.covariates)
    pairs_dir = out / "pairs"
    pairs_dir.mkdir(exist_ok=True)
    for part in (ds.train, ds.val, ds.test):
        for pair in part:
            save_pair(pairs_dir / f"{pair.timestamp}.npz", pair)
            outputs.append(f"pairs/{pair.timestamp}.npz")
    lines = [f"{ts} {split}" for ts, split in sorted(ds.splits.items())]
    (out / "splits.txt").write_text("\n".join(lines) + "\n")
    _write_run_records(out, cfg, "synth-data", outputs)
    h, w = cfg.synth.domain_hw
    print(f"wrote {len(ds.train)} train / {len(ds.val)} val / "
          f"{len(ds.test)} test pairs at {h}x{w} to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    data = _read_dataset(args.data)
    tcfg = cfg.train_config()
    gen_spec = cfg.networks.gen_spec()
    critic_spec = cfg.networks.critic_spec()
    state = None
    if args.resume:
        state = load_checkpoint(args.resume, lr=tcfg.lr,
                                betas=(tcfg.adam_beta1, tcfg.adam_beta2))
    state = fit(data["train"], data["val"], tcfg, out,
                gen_spec=gen_spec, critic_spec=critic_spec, state=state)
    outputs = sorted(p.name for p in out.glob("*.pt"))
    outputs += ["metrics.csv", "norm_stats.json"]
    _write_run_records(out, cfg, "train", outputs,
                       extra={"final_step": state.step,
                              "best": state.best})
    print(f"trained to step {state.step}; best {state.best}; artifacts in {out}")
    return 0


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    obj = load_any(args.input)
    if isinstance(obj, SamplePair):
        low, cov = obj.low, obj.covariates
    else:
        low = obj
        cov = load_field(args.covariates) if args.covariates else None

    if args.method == "model":
        if not args.ckpt:
            raise ConfigurationError("--ckpt is required for --method model")
        if cov is None:
            raise ConfigurationError(
                "model inference needs covariates: pass a saved pair as "
                "--input or give --covariates")
        if args.tile:
            pred = downscale_tiled(args.ckpt, low, cov,
                                   tile=args.tile, overlap=args.overlap)
        else:
            pred = downscale_domain(args.ckpt, low, cov)
    else:
        pred = downscale_baseline(low, args.method)

    name = f"{args.method}.npz"
    save_field(out / name, pred)
    outputs = [name]
    if isinstance(obj, SamplePair):
        save_field(out / "reference.npz", trim_pair(obj).high)
        outputs.append("reference.npz")
    _write_run_records(out, cfg, "infer", outputs,
                       extra={"method": args.method, "input": str(args.input)})
    h, w = pred.shape_hw
    print(f"wrote {name} ({h}x{w}) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    data = _read_dataset(args.data)
    if args.split == "all":
        pairs = data["train"] + data["val"] + data["test"]
    else:
        pairs = data[args.split]

    names = (tuple(s.strip() for s in args.methods.split(","))
             if args.methods else cfg.eval.methods)
    methods = {}
    for name in names:
        if name == "model":
            if not args.ckpt:
                raise ConfigurationError("method 'model' needs --ckpt")
            methods[name] = checkpoint_method(args.ckpt)
        elif name in ("bilinear", "nearest"):
            methods[name] = baseline_method(name)
        else:
            raise ConfigurationError(f"unknown evaluation method {name!r}")

    workers = args.workers if args.workers else cfg.eval.workers
    rows = evaluate(pairs, methods, regions=cfg.eval.regions or None,
                    power_floor=cfg.eval.power_floor, n_workers=workers)
    save_report(out / "report.csv", rows)
    table = summary_table(rows)
    (out / "summary.txt").write_text(table + "\n")
    curves = rapsd_curves(pairs, methods)
    save_rapsd_csv(out / "rapsd.csv", curves)
    _write_run_records(out, cfg, "evaluate",
                       ["report.csv", "rapsd.csv", "summary.txt"],
                       extra={"split": args.split, "n_pairs": len(pairs)})
    print(table)
    return 0


def cmd_plot(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    labels = args.labels.split(",") if args.labels else None
    name = args.kind.replace("-", "_") + ".png"
    path = out / name
    if args.kind == "validation-curves":
        plot_validation_curves(args.inputs, labels=labels, out_path=path,
                               dpi=cfg.plot.dpi)
    elif args.kind == "violin":
        _single_input(args)
        plot_violin(args.inputs[0], out_path=path, metric=args.metric,
                    dpi=cfg.plot.dpi)
    elif args.kind == "rapsd":
        _single_input(args)
        plot_rapsd(args.inputs[0], out_path=path, spacing_km=args.spacing_km,
                   dpi=cfg.plot.dpi)
    else:
        plot_fieldmap(args.inputs, labels=labels, out_path=path,
                      dpi=cfg.plot.dpi)
    _write_run_records(out, cfg, "plot", [name], extra={"kind": args.kind})
    print(f"wrote {path}")
    return 0


def _single_input(args) -> None:
    if len(args.inputs) != 1:
        raise ConfigurationError(
            f"plot kind {args.kind!r} takes exactly one --input")


def cmd_preset(args) -> int:
    text = emit(preset(args.name))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="windscale",
        description="Wind-field downscaling: synthetic data, adversarial "
                    "training, inference, evaluation, and plots.")
    p.add_argument("--version", action="version",
                   version=f"windscale {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--preset", choices=PRESET_NAMES,
                        help="named experiment configuration")
        sp.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable; wins "
                             "over --config/--preset)")

    sp = sub.add_parser("synth-data", help="generate a paired synthetic dataset")
    config_flags(sp)
    sp.add_argument("--out", required=True, help="dataset directory to create")
    sp.set_defaults(func=cmd_synth_data)

    sp = sub.add_parser("train", help="train (or continue training) a model")
    config_flags(sp)
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--resume", metavar="CKPT",
                    help="checkpoint to continue from; the current loss "
                         "config applies, so switching presets fine-tunes")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="downscale one field or saved pair")
    config_flags(sp)
    sp.add_argument("--input", required=True,
                    help="saved pair or low-res predictor field (.npz)")
    sp.add_argument("--ckpt", help="trained checkpoint (model method)")
    sp.add_argument("--covariates",
                    help="covariate field when --input is not a pair")
    sp.add_argument("--method", choices=("model", "bilinear", "nearest"),
                    default="model")
    sp.add_argument("--tile", type=int,
                    help="run tiled inference with this tile size (fine cells)")
    sp.add_argument("--overlap", type=int, default=64,
                    help="tile overlap in fine cells (with --tile)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("evaluate", help="score methods on a dataset split")
    config_flags(sp)
    sp.add_argument("--data", required=True, help="dataset directory")
    sp.add_argument("--ckpt", help="trained checkpoint (model method)")
    sp.add_argument("--methods", help="comma list overriding eval.methods")
    sp.add_argument("--split", choices=("train", "val", "test", "all"),
                    default="test")
    sp.add_argument("--workers", type=int,
                    help="pairs scored in parallel (overrides eval.workers)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("plot", help="render a figure from run artifacts")
    config_flags(sp)
    sp.add_argument("--kind", required=True,
                    choices=("validation-curves", "violin", "rapsd", "fieldmap"))
    sp.add_argument("--input", dest="inputs", action="append", required=True,
                    help="input file (repeatable where the kind allows)")
    sp.add_argument("--labels", help="comma list of labels matching --input order")
    sp.add_argument("--metric", choices=("rmse", "lsd"), default="rmse",
                    help="metric for violin plots")
    sp.add_argument("--spacing-km", type=float,
                    help="fine-grid spacing for the rapsd cutoff line")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("preset", help="print or save a named configuration")
    sp.add_argument("name", choices=PRESET_NAMES)
    sp.add_argument("--out", help="write YAML here instead of stdout")
    sp.set_defaults(func=cmd_preset)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WindscaleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: missing input: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
