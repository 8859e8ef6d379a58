"""Command-line entry point: ``flowdetect prepare | train | evaluate | predict``.

Settings resolve as command-line flag > ``--config`` JSON file > built-in
default, and the effective values are echoed to stderr before any work.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import dataflow as D
from . import pipeline as P
from .container import atomic_write_text
from .errors import ConfigError, DataError, InvariantError
from .model import ModelConfig, load_checkpoint, predict_scores, save_checkpoint
from .metrics import predict as verdicts

log = logging.getLogger("flowdetect")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULTS = {
    "prepare": {"splits": [0.6, 0.2, 0.2], "window": 10, "stride": 1, "seed": 0, "subsample": None},
    "train": {
        "epochs": 20,
        "batch": 64,
        "seed": 0,
        "lr": 1e-3,
        "clip_norm": 5.0,
        "patience": None,
        "conv_blocks": [[32, 3, 2], [64, 3, 2]],
        "dropout": 0.3,
        "hidden": 64,
        "untrained": False,
    },
    "evaluate": {},
    "predict": {},
}


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _blocks(text: str) -> list[list[int]]:
    """``32:3:2,64:3:2`` -> [[32, 3, 2], [64, 3, 2]]"""
    try:
        return [[int(v) for v in blk.split(":")] for blk in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"conv blocks look like 32:3:2,64:3:2, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowdetect", description="CNN-BiLSTM NetFlow anomaly detector")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="ingest a CSV, fit preprocessing, cache windowed splits")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--splits", type=_float_list, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--subsample", type=int, default=None, help="stratified row subsample size")
    p.add_argument("--export-splits", action="store_true", help="also write the split rows as CSV")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("train", help="train on prepared caches and keep the best validation checkpoint")
    p.add_argument("--prepared", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint file")
    p.add_argument("--history-dir", type=Path, help="where loss/metrics tables go (default: next to --out)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--conv-blocks", type=_blocks, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument(
        "--untrained", action="store_const", const=True, default=None,
        help="write a random-init checkpoint with a validation-calibrated threshold",
    )
    p.add_argument("--config", type=Path)

    p = sub.add_parser("evaluate", help="test-split metrics at the stored threshold")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--prepared", required=True, type=Path)
    p.add_argument("--out", type=Path, help="metrics JSON (default: <ckpt>.metrics.json)")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("predict", help="score every window of a CSV")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", type=Path, help="CSV output (default: stdout)")
    p.add_argument("--stride", type=int, default=None, help="default: the stride the checkpoint was trained with")
    p.add_argument("--config", type=Path)
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS[command])
    cfg_path = getattr(args, "config", None)
    if cfg_path is not None:
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        try:
            cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {cfg_path} is not valid JSON: {exc}") from None
        section = cfg.get(command, cfg)
        settings.update({k: v for k, v in section.items() if k in settings})
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _echo_settings(command: str, settings: dict, args: argparse.Namespace) -> None:
    shown = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k not in settings}
    shown.update(settings)
    print(f"[flowdetect {command}] " + json.dumps(shown, sort_keys=True, default=str), file=sys.stderr)


# --------------------------------------------------------------------------
# commands


def cmd_prepare(args, s) -> int:
    loaded = D.load_csv(args.data)
    if loaded.skipped:
        print(f"skipped {len(loaded.skipped)} malformed rows (first at line {loaded.skipped[0].line})", file=sys.stderr)
    prep = P.prepare(loaded.records, tuple(s["splits"]), s["window"], s["stride"], s["subsample"], s["seed"])
    prep.summary["rows_skipped"] = len(loaded.skipped)

    out = args.out
    D.save_windows(prep.train, out / "train.win")
    D.save_windows(prep.val, out / "val.win")
    D.save_windows(prep.test, out / "test.win")
    D.save_stats(prep.stats, out / "stats.json")
    if args.export_splits:
        for name, part in zip(("train", "val", "test"), prep.records):
            D.write_csv(part, out / f"{name}_flows.csv")
    atomic_write_text(out / "summary.json", json.dumps(prep.summary, indent=2) + "\n")

    sm = prep.summary
    print(f"records: {sm['records_used']} (loaded {sm['records_loaded']}, skipped {len(loaded.skipped)})")
    print(f"benign share: {sm['benign_share']:.4%}")
    for name, info in sm["splits"].items():
        print(f"{name}: {info['rows']} rows, {info['windows']} windows, benign {info['benign_share']:.4%}")
    return EXIT_OK


def _load_prepared(prepared: Path, *names: str):
    if not prepared.is_dir():
        raise DataError(f"prepared directory not found: {prepared}")
    return [D.load_windows(prepared / f"{n}.win") for n in names]


def cmd_train(args, s) -> int:
    train_ws, val_ws = _load_prepared(args.prepared, "train", "val")
    stats = D.load_stats(args.prepared / "stats.json")
    model_config = ModelConfig(
        T=train_ws.T, n=train_ws.n_features, conv_blocks=s["conv_blocks"], dropout=s["dropout"], hidden=s["hidden"]
    )
    train_config = P.TrainConfig(
        epochs=s["epochs"], batch_size=s["batch"], lr=s["lr"], clip_norm=s["clip_norm"], seed=s["seed"],
        patience=s["patience"],
    )
    if s["untrained"]:
        ckpt = P.untrained_checkpoint(val_ws, model_config, stats, seed=s["seed"])
        save_checkpoint(ckpt, args.out)
        print(f"untrained checkpoint: validation F1 {ckpt.metadata['best_val_f1']:.4f} at tau {ckpt.threshold:.6f}")
        return EXIT_OK

    ckpt, history = P.train(train_ws, val_ws, model_config, train_config, stats)
    history_dir = args.history_dir or args.out.parent
    save_checkpoint(ckpt, args.out)
    P.write_history(history, ckpt, history_dir)
    for r in history:
        print(f"epoch {r.epoch:3d}  loss {r.loss:.6f}  val F1 {r.f1:.4f}  tau {r.threshold:.6f}")
    print(f"best epoch {ckpt.metadata['best_epoch']}: validation F1 {ckpt.metadata['best_val_f1']:.4f}, tau {ckpt.threshold:.6f}")
    return EXIT_OK


def cmd_evaluate(args, s) -> int:
    ckpt = load_checkpoint(args.ckpt)
    (test_ws,) = _load_prepared(args.prepared, "test")
    report = P.evaluate(ckpt, test_ws)
    out = args.out or args.ckpt.with_name(args.ckpt.name + ".metrics.json")
    atomic_write_text(out, report.to_json())
    cm = report.confusion
    print(f"threshold  {report.threshold:.6f}")
    for key in ("accuracy", "precision", "recall", "f1"):
        print(f"{key:<10} {getattr(report, key):.4f}")
    print(f"macro_f1   {report.macro.f1:.4f}")
    print(f"tp {cm.tp}  tn {cm.tn}  fp {cm.fp}  fn {cm.fn}")
    return EXIT_OK


def cmd_predict(args, s) -> int:
    ckpt = load_checkpoint(args.ckpt)
    loaded = D.load_csv(args.data)
    table = D.transform(loaded.records, ckpt.stats)
    stride = args.stride or ckpt.metadata.get("stride", 1)
    ws = D.build_windows(table, ckpt.config.T, stride)
    scores = predict_scores(ws.sequences, ckpt.params, ckpt.config)
    pred = verdicts(scores, ckpt.threshold)

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start_row", "score", "verdict", "label"])
    for start, sc, v, lab in zip(ws.starts, scores, pred, ws.labels):
        w.writerow([int(start), repr(float(sc)), int(v), int(lab)])
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
        print(f"wrote {len(ws)} window verdicts to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"flowdetect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        settings = resolve(args.command, args)
        _echo_settings(args.command, settings, args)
        return COMMANDS[args.command](args, settings)
    except ConfigError as exc:
        print(f"flowdetect: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"flowdetect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, AssertionError, FloatingPointError) as exc:
        print(f"flowdetect: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
