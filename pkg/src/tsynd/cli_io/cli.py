"""``tsynd`` command line: dataset emission, training, evaluation, synthesis and plots.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from ..diffcore import SeededRng, save_tensor
from ..errors import ConfigError, TsyndError
from ..harness import (
    Dataset,
    Perturbation,
    RunConfig,
    ablate_measure,
    evaluation_rows,
    make_shapes,
    read_metrics,
    train_classifier,
    write_metrics,
)
from ..harness.metrics import MetricsRecord
from ..models import AutoencoderModel, ClassifierModel, LatentCode, encode_batch, train_autoencoder
from ..synthesis import generate, minimize_class_probability_batch
from .config import ConfigFile, describe_defaults, load_config
from .idx import load_idx, save_idx
from .plot import plot

log = logging.getLogger("tsynd")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, config_required: bool) -> None:
    p.add_argument("--config", required=config_required, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
    p.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsynd", description=__doc__.splitlines()[0], epilog=f"config defaults: {describe_defaults()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-shapes", help="write the synthetic shapes dataset as IDX files")
    _common(p, False)
    p.add_argument("--n", type=int, default=400, help="training images (val n/10, test n/4)")

    p = sub.add_parser("ae-train", help="train the autoencoder on the training images")
    _common(p, True)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("clf-train", help="train a classifier in one mode")
    _common(p, True)
    p.add_argument("--mode", choices=("baseline", "noise", "tsynd"), default=None)

    p = sub.add_parser("eval", help="test accuracy of classifiers under perturbations")
    _common(p, True)
    p.add_argument("--clf", action="append", required=True, help="classifier checkpoint (repeatable)")
    p.add_argument("--perturb", nargs="+", default=None, help="none, gauss[:sigma], fgsm[:eps]")
    p.add_argument("--sigma", type=float, default=0.2, help="noise level for a bare 'gauss'")
    p.add_argument("--eps", type=float, default=0.1, help="attack strength for a bare 'fgsm'")

    p = sub.add_parser("ablate", help="TSynD with each uncertainty measure")
    _common(p, True)
    p.add_argument("--measure", nargs="+", choices=("entropy", "mi"), default=["entropy", "mi"])

    p = sub.add_parser("synth", help="dump synthesized samples and their sidecar")
    _common(p, True)
    p.add_argument("--clf", required=True, help="classifier checkpoint")
    p.add_argument("--n", type=int, default=None, help="number of source images")
    p.add_argument("--adversarial", action="store_true", help="minimize the source-class probability instead")

    p = sub.add_parser("plot", help="render SVG charts from metrics and synth sidecars")
    _common(p, False)
    p.add_argument("--metrics", default=None, help="metrics CSV")
    p.add_argument("--sidecar", action="append", default=[], help="synth JSON sidecar (repeatable)")
    return parser


# -- helpers ------------------------------------------------------------------


def _config(args) -> ConfigFile:
    cfg = load_config(args.config) if args.config else ConfigFile()
    if args.seed is not None:
        cfg.run = replace(cfg.run, seed=args.seed)
    return cfg


def _out_dir(args, cfg: ConfigFile) -> str:
    out = args.out or cfg.path("out_dir")
    if out is None:
        raise UsageError("no output directory: pass --out or set out_dir")
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise UsageError(f"{out} exists and is not empty (use --force)")
    os.makedirs(out, exist_ok=True)
    return out


def _dataset(cfg: ConfigFile, split: str) -> Dataset:
    images, labels = cfg.path(f"{split}_images"), cfg.path(f"{split}_labels")
    if images is None or labels is None:
        raise ConfigError(f"config lacks {split}_images / {split}_labels")
    return load_idx(images, labels, split, cfg.extra["num_classes"])


def _classes(*sets: Dataset) -> List[Dataset]:
    k = max(d.num_classes for d in sets)
    return [Dataset(d.images, d.labels, k, d.split) for d in sets]


def _autoencoder(cfg: ConfigFile) -> AutoencoderModel:
    path = cfg.path("ae_checkpoint")
    if path is None:
        raise ConfigError("config lacks ae_checkpoint")
    return AutoencoderModel.load(path)


# -- subcommands ----------------------------------------------------------------


def cmd_make_shapes(args, cfg: ConfigFile) -> int:
    if args.n < 4:
        raise UsageError("--n must be at least 4")
    out = _out_dir(args, cfg)
    seed = cfg.run.seed
    for split, n in (("train", args.n), ("val", max(4, args.n // 10)), ("test", max(4, args.n // 4))):
        d = make_shapes(n, seed, split)
        save_idx(d, os.path.join(out, f"{split}-images.idx"), os.path.join(out, f"{split}-labels.idx"))
    return EXIT_OK


def cmd_ae_train(args, cfg: ConfigFile) -> int:
    train = _dataset(cfg, "train")
    out = _out_dir(args, cfg)
    seed = cfg.run.seed
    epochs = args.epochs if args.epochs is not None else int(cfg.extra["ae_epochs"])
    channels, size, _ = train.image_dims
    ae = AutoencoderModel.build(SeededRng(seed).child("ae"), in_channels=channels, size=size)
    curve = train_autoencoder(ae, train.images, epochs, SeededRng(seed), lr=float(cfg.extra["ae_lr"]))
    ae.save(os.path.join(out, "ae.tsck"), meta={"run_id": "ae", "seed": seed, "epochs": epochs})
    write_metrics([MetricsRecord("ae", seed, e, "train", "none", "reconstruction_mse", v) for e, v in enumerate(curve)], os.path.join(out, "metrics.csv"))
    return EXIT_OK


def _save_run(result, run: RunConfig, out: str) -> None:
    meta = {
        "run_id": run.run_id,
        "seed": run.seed,
        "mode": run.mode,
        "best_epoch": result.best_epoch,
        "val_accuracy": result.best_val_accuracy,
    }
    result.model.save(os.path.join(out, f"clf-{run.run_id}.tsck"), meta=meta)


def cmd_clf_train(args, cfg: ConfigFile) -> int:
    run = cfg.run if args.mode is None else replace(cfg.run, mode=args.mode, run_id=args.mode)
    train, val = _classes(_dataset(cfg, "train"), _dataset(cfg, "val"))
    ae = _autoencoder(cfg) if run.mode != "baseline" else None
    out = _out_dir(args, cfg)
    result = train_classifier(run, train, val, ae)
    _save_run(result, run, out)
    write_metrics(result.metrics, os.path.join(out, "metrics.csv"))
    return EXIT_OK


def _perturbations(args) -> List[str]:
    out = []
    for p in args.perturb or ["none", "gauss", "fgsm"]:
        p = {"gauss": f"gauss:{args.sigma}", "gaussian": f"gauss:{args.sigma}", "fgsm": f"fgsm:{args.eps}"}.get(p, p)
        try:
            out.append(str(Perturbation.parse(p)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return out


def cmd_eval(args, cfg: ConfigFile) -> int:
    perts = _perturbations(args)
    test = _dataset(cfg, "test")
    out = _out_dir(args, cfg)
    rows = []
    for path in args.clf:
        model = ClassifierModel.load(path)
        meta = getattr(model, "meta", {}) or {}
        run_id = meta.get("run_id", os.path.splitext(os.path.basename(path))[0])
        seed = int(meta.get("seed", cfg.run.seed))
        d = test if test.num_classes == model.num_classes else Dataset(test.images, test.labels, model.num_classes, "test")
        rows += evaluation_rows(run_id, seed, int(meta.get("best_epoch", -1)), model, d, perts, cfg.run.seed)
    write_metrics(rows, os.path.join(out, "metrics.csv"))
    for r in rows:
        print(f"{r.run_id}\t{r.perturbation}\t{r.value:.4f}")
    return EXIT_OK


def cmd_ablate(args, cfg: ConfigFile) -> int:
    train, val = _classes(_dataset(cfg, "train"), _dataset(cfg, "val"))
    ae = _autoencoder(cfg)
    out = _out_dir(args, cfg)
    results = ablate_measure(cfg.run, train, val, ae, args.measure)
    rows = []
    for measure in args.measure:
        result = results[measure]
        run = replace(cfg.run, mode="tsynd", gen=replace(cfg.run.gen, measure=measure), run_id=f"tsynd-{measure}")
        _save_run(result, run, out)
        rows += result.metrics
    write_metrics(rows, os.path.join(out, "metrics.csv"))
    return EXIT_OK


def cmd_synth(args, cfg: ConfigFile) -> int:
    data = _dataset(cfg, "val")
    ae = _autoencoder(cfg)
    clf = ClassifierModel.load(args.clf)
    out = _out_dir(args, cfg)
    n = min(len(data), args.n if args.n is not None else int(cfg.extra["synth_n"]))
    x, y = data.images[:n], data.labels[:n]
    rng = SeededRng(cfg.run.seed).child("synth")
    if args.adversarial:
        codes = encode_batch(ae, x)
        latents = [LatentCode(z, "encoded", i, int(y[i])) for i, z in enumerate(codes)]
        records = minimize_class_probability_batch(
            latents, y, clf, ae, int(cfg.extra["adversarial_steps"]), float(cfg.extra["adversarial_lr"])
        )
    else:
        records = generate(x, y, clf, ae, cfg.run.gen, rng, list(range(n)))
    save_tensor(os.path.join(out, "synth.tsyd"), np.stack([r.image for r in records]))
    with open(os.path.join(out, "synth.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.sidecar() for r in records], fh, indent=1, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_plot(args, cfg: ConfigFile) -> int:
    if args.metrics is None and not args.sidecar:
        raise UsageError("plot needs --metrics and/or --sidecar")
    if args.metrics is not None and not read_metrics(args.metrics) and not args.sidecar:
        log.warning("%s holds no metric rows; nothing to plot", args.metrics)
        return EXIT_OK
    out = _out_dir(args, cfg)
    written = plot(args.metrics, out, args.sidecar)
    if not written:
        log.warning("no chartable rows found")
    return EXIT_OK


COMMANDS = {
    "make-shapes": cmd_make_shapes,
    "ae-train": cmd_ae_train,
    "clf-train": cmd_clf_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "plot": cmd_plot,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, _config(args))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (TsyndError, OSError, ValueError) as exc:
        print(f"tsynd: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
