"""Command-line entry point: prepare, train, eval, analyze-pointers, export-affinity.

Exit codes: 0 success, 1 usage, 2 data/checkpoint problem, 3 numeric failure.
Relative paths are resolved against ``$MPCN_DATA_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, checkpoint, data
from .baselines import BASELINES
from .config import AGGREGATIONS, ExperimentConfig, load_config
from .errors import CheckpointError, ConfigError, DataFormatError, NumericError
from .model import MPCN
from .trainer import evaluate_mse, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_DIR_ENV = "MPCN_DATA_DIR"
MODELS = ("mpcn",) + tuple(BASELINES)

logger = logging.getLogger("mpcn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def resolve(path) -> Path:
    p = Path(path)
    base = os.environ.get(DATA_DIR_ENV)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(resolve(args.config)) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


# ----------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    cfg = _experiment(args)
    inter, skipped = data.parse_corpus(resolve(args.corpus))
    if not inter:
        raise DataFormatError(f"{args.corpus}: corpus is empty")
    if args.sample_users:
        inter = data.sample_users(inter, args.sample_users, cfg.seed)
    ds = data.prepare(inter, k=args.k_core, seed=cfg.seed, min_count=args.min_count)
    out = resolve(args.out)
    data.save_snapshot(ds, out)
    stats = {**ds.stats(), "skipped_lines": skipped, "k_core": args.k_core, "seed": cfg.seed,
             "snapshot": str(out)}
    Path(str(out) + ".stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    _emit(args, stats, " ".join(f"{k}={v}" for k, v in stats.items()))
    return EXIT_OK


_MPCN_FLAGS = {
    "pointers": "n_pointers", "layers": "layers", "aggregation": "aggregation", "tau": "tau",
}
_MPCN_SWITCHES = {
    "no_gates": "use_gates", "no_fm": "use_fm",
    "no_word_coattention": "use_word_coattention", "no_review_coattention": "use_review_coattention",
}
_COMMON_FLAGS = {
    "d": "d", "epochs": "max_epochs", "patience": "patience", "lr": "lr", "batch_size": "batch_size",
    "dropout": "dropout", "l2": "l2", "precision": "precision",
}


def _train_config(args) -> ExperimentConfig:
    cfg = _experiment(args)
    if args.model is not None:
        cfg.model = args.model
    if cfg.model not in MODELS:
        raise UsageError(f"unknown model {cfg.model!r}; choose from {', '.join(MODELS)}")
    given = [f for f in list(_MPCN_FLAGS) + list(_MPCN_SWITCHES)
             if getattr(args, f) not in (None, False)]
    if cfg.model != "mpcn" and given:
        flags = ", ".join("--" + f.replace("_", "-") for f in given)
        raise UsageError(f"{flags} only apply to --model mpcn")
    for flag, key in {**_MPCN_FLAGS, **_COMMON_FLAGS}.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, key, value)
    for flag, key in _MPCN_SWITCHES.items():
        if getattr(args, flag):
            setattr(cfg, key, False)
    if args.no_timing:
        cfg.record_wall_time = False
    if not cfg.use_review_coattention and args.pointers not in (None, 1):
        raise UsageError("--pointers has no effect with --no-review-coattention")
    return cfg


def _build(cfg: ExperimentConfig, ds):
    if cfg.model == "mpcn":
        return MPCN.for_dataset(cfg.mpcn(), ds, cfg.seed)
    return BASELINES[cfg.model].for_dataset(cfg.baseline(), ds, cfg.seed)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    ds = data.load_snapshot(resolve(args.snapshot))
    model = _build(cfg, ds)
    tcfg = dataclasses.replace(cfg.train(), seed=cfg.seed)
    out = resolve(args.out)
    history = resolve(args.history) if args.history else Path(str(out) + ".history.jsonl")
    result = train(model, ds.examples("train"), ds.examples("dev"), tcfg, history_path=history)
    test = ds.examples("test")
    test_mse = evaluate_mse(model, test) if len(test) else None
    meta = {
        "best_epoch": result.best_epoch,
        "best_dev_mse": result.best_dev_mse,
        "test_mse": test_mse,
        "stopped_early": result.stopped_early,
        "epochs_run": len(result.history),
        "train_config": dataclasses.asdict(tcfg),
    }
    checkpoint.save(model, out, ds, meta)
    summary = {"model": cfg.model, "checkpoint": str(out), "history": str(history),
               **{k: v for k, v in meta.items() if k != "train_config"}}
    test_txt = "n/a" if test_mse is None else f"{test_mse:.4f}"
    _emit(args, summary,
          f"{'model':<6} {'dev_mse':>8} {'test_mse':>8} {'epoch':>5}\n"
          f"{cfg.model:<6} {result.best_dev_mse:>8.4f} {test_txt:>8} {result.best_epoch:>5}")
    return EXIT_OK


def _load(args):
    ds = data.load_snapshot(resolve(args.snapshot))
    model, meta = checkpoint.load(resolve(args.checkpoint), ds)
    return ds, model, meta


def cmd_eval(args) -> int:
    ds, model, _ = _load(args)
    res = {}
    for part in ("dev", "test"):
        ex = ds.examples(part)
        res[f"{part}_mse"] = evaluate_mse(model, ex) if len(ex) else None
    res["model"] = model.kind
    _emit(args, res, "  ".join(f"{k}={v}" for k, v in res.items()))
    return EXIT_OK


def cmd_analyze_pointers(args) -> int:
    cfg = _experiment(args)
    ds, model, _ = _load(args)
    if model.kind != "mpcn":
        raise UsageError("analyze-pointers needs an mpcn checkpoint")
    if model.n_heads < 2:
        raise UsageError("analyze-pointers needs a checkpoint with at least two pointers")
    size = args.sample_size if args.sample_size is not None else cfg.sample_size
    report = analysis.pointer_behavior(model, ds, size, cfg.seed)
    payload = report.to_dict()
    partition = report.all_unique + report.one_repeated + report.all_repeated
    payload["majority_all_unique"] = report.all_unique > 50.0
    text = (f"pointers={report.n_pointers} samples={report.n_samples}\n"
            f"(1) all unique   {report.all_unique:6.1f}%\n"
            f"(2) 1 repeated   {report.one_repeated:6.1f}%\n"
            f"(3) all repeated {report.all_repeated:6.1f}%\n"
            f"(4) one-to-many  {report.one_to_many:6.1f}%\n"
            f"(1)+(2)+(3) = {partition:.1f}%")
    if args.out:
        resolve(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit(args, payload, text)
    return EXIT_OK


def cmd_export_affinity(args) -> int:
    ds, model, _ = _load(args)
    if model.kind != "mpcn":
        raise UsageError("export-affinity needs an mpcn checkpoint")
    files = analysis.export_affinity(model, ds, args.user, args.item, resolve(args.out))
    payload = {"user_id": args.user, "item_id": args.item, "files": [str(f) for f in files]}
    _emit(args, payload, "\n".join(str(f) for f in files))
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    common.add_argument("--config", help="key = value file with ExperimentConfig fields")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mpcn", description="Multi-pointer co-attention recommender experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", parents=[common], help="corpus -> dataset snapshot")
    sp.add_argument("corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--k-core", type=int, default=5)
    sp.add_argument("--min-count", type=int, default=data.MIN_TOKEN_COUNT)
    sp.add_argument("--sample-users", type=int, default=None)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", parents=[common], help="train a model on a snapshot")
    sp.add_argument("snapshot")
    sp.add_argument("--model", choices=MODELS, default=None)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--history", help="history JSON-lines path (default <out>.history.jsonl)")
    sp.add_argument("--pointers", type=int)
    sp.add_argument("--layers", type=int, choices=(0, 1, 2))
    sp.add_argument("--aggregation", choices=AGGREGATIONS)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--no-gates", action="store_true")
    sp.add_argument("--no-fm", action="store_true")
    sp.add_argument("--no-word-coattention", action="store_true")
    sp.add_argument("--no-review-coattention", action="store_true")
    sp.add_argument("--d", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--l2", type=float)
    sp.add_argument("--precision", type=int, choices=(32, 64))
    sp.add_argument("--no-timing", action="store_true", help="write wall_ms as null")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", parents=[common], help="dev/test MSE of a checkpoint")
    sp.add_argument("snapshot")
    sp.add_argument("checkpoint")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("analyze-pointers", parents=[common], help="multi-pointer behaviour report")
    sp.add_argument("snapshot")
    sp.add_argument("checkpoint")
    sp.add_argument("--sample-size", type=int, default=None)
    sp.add_argument("--out", help="also write the JSON report here")
    sp.set_defaults(func=cmd_analyze_pointers)

    sp = sub.add_parser("export-affinity", parents=[common], help="per-head affinity CSVs")
    sp.add_argument("snapshot")
    sp.add_argument("checkpoint")
    sp.add_argument("--user", required=True)
    sp.add_argument("--item", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_affinity)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        # non-finite values are caught and reported as NumericError
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mpcn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"mpcn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, OSError, KeyError, ValueError) as exc:
        print(f"mpcn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
