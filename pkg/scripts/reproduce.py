"""Desk-scale protocol: stratified subsample, chronological split, 20-epoch training, test evaluation.

    python scripts/reproduce.py --data NF-BoT-IoT.csv --out runs/real
    python scripts/reproduce.py --synthetic 600000 --out runs/synthetic

Writes checkpoint, loss curve, per-epoch metrics and a ``report.json`` with the
trained, untrained and all-attack baseline metrics on the test split.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from flowdetect import dataflow as D
from flowdetect import pipeline as P
from flowdetect.container import atomic_write_text
from flowdetect.model import ModelConfig, save_checkpoint
from flowdetect.synthetic import generate_flows


def run(records, out: Path, subsample=50_000, epochs=20, seed=0, T=10) -> dict:
    t0 = time.perf_counter()
    prep = P.prepare(records, T=T, subsample=subsample, seed=seed)
    model_config = ModelConfig(T=T, n=prep.train.n_features)
    train_config = P.TrainConfig(epochs=epochs, seed=seed)
    ckpt, history = P.train(prep.train, prep.val, model_config, train_config, prep.stats)
    trained = P.evaluate(ckpt, prep.test)
    untrained = P.evaluate(P.untrained_checkpoint(prep.val, model_config, prep.stats, seed=seed), prep.test)
    baseline = P.majority_baseline(prep.test.labels)
    on_train = P.evaluate(ckpt, prep.train)

    save_checkpoint(ckpt, out / "model.ckpt")
    P.write_history(history, ckpt, out)
    report = {
        "dataset": prep.summary,
        "model": model_config.to_dict(),
        "train": asdict(train_config),
        "losses": [r.loss for r in history],
        "val_f1": [r.f1 for r in history],
        "best_epoch": ckpt.metadata["best_epoch"],
        "threshold": ckpt.threshold,
        "checkpoint_sha256": ckpt.digest(),
        "test": trained.to_dict(),
        "train_split": on_train.to_dict(),
        "untrained": untrained.to_dict(),
        "all_attack_baseline": baseline.to_dict(),
    }
    atomic_write_text(out / "report.json", json.dumps(report, indent=2) + "\n")
    report["seconds"] = time.perf_counter() - t0
    return report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="NF-BoT-IoT v1 CSV")
    src.add_argument("--synthetic", type=int, metavar="ROWS", help="generate this many synthetic flows instead")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--subsample", type=int, default=50_000)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.data:
        loaded = D.load_csv(args.data)
        records = loaded.records
        print(f"loaded {len(records)} records ({len(loaded.skipped)} skipped)")
    else:
        records = generate_flows(args.synthetic, seed=args.seed)
    print(f"benign share {D.benign_fraction(records):.4%}")

    rep = run(records, args.out, args.subsample, args.epochs, args.seed)
    print(f"epoch-1 loss {rep['losses'][0]:.6f}  final loss {rep['losses'][-1]:.6f}")
    for name in ("test", "untrained", "all_attack_baseline"):
        m = rep[name]
        print(
            f"{name:<20} acc {m['accuracy']:.4f}  P {m['precision']:.4f}  R {m['recall']:.4f}  "
            f"F1 {m['f1']:.4f}  macro F1 {m['macro']['f1']:.4f}"
        )
    print(f"checkpoint {rep['checkpoint_sha256']}  [{rep['seconds']:.0f}s]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
