"""Command-line entry point for running federated training experiments."""

from __future__ import annotations

import argparse
import sys

from .experiment import load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slimqfl",
        description=(
            "Seeded simulator of slimmable quantum federated learning over a "
            "Rayleigh-fading uplink. Writes CSV metrics and SVG learning curves."
        ),
    )
    parser.add_argument("--config", metavar="FILE", help="flat 'key = value' config file")
    parser.add_argument("--scheme", help="comma list of schemes, or 'all' (default all)")
    parser.add_argument("--sigma-db", help="comma list of noise powers in dB (default -40)")
    parser.add_argument("--devices", help="comma list of device counts (sweep; default 10)")
    parser.add_argument("--local-iters", help="comma list of local iteration counts (default 10)")
    parser.add_argument("--epochs", help="communication rounds per run (default 200)")
    parser.add_argument("--batch", help="comma list of batch sizes (sweep; default 32)")
    parser.add_argument("--seed", help="single seed (overrides --seeds)")
    parser.add_argument("--seeds", help="comma list of seeds (default 0,1,2,3,4)")
    parser.add_argument("--u-pole", help="pole-upload rate threshold in bits/sec (default auto)")
    parser.add_argument("--u-whole", help="whole-upload rate threshold in bits/sec (default auto)")
    parser.add_argument("--eta0", help="initial learning rate (default 0.01)")
    parser.add_argument("--decay", help="learning-rate decay (default 0.001)")
    parser.add_argument("--w", help="observable logit scale (default 1.6)")
    parser.add_argument("--data-dir", help="directory holding the IDX digit files")
    parser.add_argument("--out-dir", help="output directory (default ./results)")
    parser.add_argument(
        "--synthetic-data", action="store_true", default=None,
        help="use the built-in synthetic dataset instead of IDX files",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "scheme": args.scheme,
        "sigma-db": args.sigma_db,
        "devices": args.devices,
        "local-iters": args.local_iters,
        "epochs": args.epochs,
        "batch": args.batch,
        "seed": args.seed,
        "seeds": args.seeds,
        "u-pole": args.u_pole,
        "u-whole": args.u_whole,
        "eta0": args.eta0,
        "decay": args.decay,
        "w": args.w,
        "data-dir": args.data_dir,
        "out-dir": args.out_dir,
        "synthetic-data": args.synthetic_data,
    }
    try:
        cfg = load_config(args.config, overrides)
        written = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
