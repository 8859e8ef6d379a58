"""Write synthetic flows in the NF-BoT-IoT v1 column layout.

    python scripts/make_synthetic_csv.py --rows 600000 --out data/synthetic.csv
"""

import argparse
from pathlib import Path

from flowdetect.dataflow import benign_fraction, write_csv
from flowdetect.synthetic import generate_flows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=600_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--benign", type=float, default=0.0231, help="benign row share")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args(argv)
    records = generate_flows(args.rows, seed=args.seed, benign_fraction=args.benign)
    write_csv(records, args.out)
    print(f"{len(records)} rows, benign {benign_fraction(records):.4%} -> {args.out}")


if __name__ == "__main__":
    main()
