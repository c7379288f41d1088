"""Command-line entry point: ``fedtheft {run,cost,gen,replay}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cost as _cost
from . import dataio, fed, nn, pipeline
from .partition import PARTITION_MODES, ClientCounts, PartitionReport

DEFAULT_ROWS = 31740
DEFAULT_FEATURES = 1035
DEFAULT_THEFT_RATE = 0.09
DEFAULT_MISSING_RATE = 0.01
DEFAULT_TRAIN_ROWS = 25392


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {v}")
    return v


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rows", type=positive_int, default=DEFAULT_ROWS)
    p.add_argument("--features", type=positive_int, default=DEFAULT_FEATURES)
    p.add_argument("--theft-rate", type=float, default=DEFAULT_THEFT_RATE)
    p.add_argument("--missing-rate", type=float, default=DEFAULT_MISSING_RATE)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedtheft", description="Federated MLP energy-theft detection simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a federated training experiment")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--data", metavar="PATH", help="CSV file with a 'label' column")
    src.add_argument("--synthetic", action="store_true", help="generate data (the default when --data is absent)")
    _add_generator_flags(run)
    defaults = fed.FedConfig()
    run.add_argument("--clients", type=positive_int, default=defaults.k_clients)
    run.add_argument("--rounds", type=positive_int, default=defaults.rounds)
    run.add_argument("--epochs", type=nonneg_int, default=defaults.local_epochs)
    run.add_argument("--lr", type=float, default=defaults.lr0)
    run.add_argument("--lr-decay", type=float, default=defaults.lr_decay)
    run.add_argument("--noise-std", type=float, default=defaults.noise_std)
    run.add_argument("--batch-size", type=positive_int, default=defaults.batch_size)
    run.add_argument("--partition", choices=PARTITION_MODES, default=defaults.partition_mode)
    run.add_argument("--shards-per-client", type=positive_int, default=defaults.shards_per_client)
    run.add_argument("--weighted-avg", action="store_true")
    run.add_argument("--seed", type=int, default=defaults.seed)
    run.add_argument("--threads", type=positive_int, default=1, help="client tasks run concurrently (results unchanged)")
    run.add_argument("--test-fraction", type=float, default=0.2)
    run.add_argument("--normalize-before-split", action="store_true")
    run.add_argument("--out", default="runs", help="parent directory for the run directory")
    run.add_argument("--run-dir", help="write into exactly this directory instead of a hashed name under --out")
    run.add_argument("--force", action="store_true", help="overwrite an existing run directory")

    c = sub.add_parser("cost", help="print the communication-cost report without training")
    c.add_argument("-R", "--rounds", type=positive_int, required=True)
    c.add_argument("-K", "--clients", type=positive_int, required=True)
    c.add_argument("-d", "--features", type=positive_int, required=True)
    c.add_argument("-B", "--bytes-per-param", type=positive_int, default=4)
    c.add_argument("--samples", type=positive_int, default=DEFAULT_TRAIN_ROWS, help="training rows across all clients")
    c.add_argument("--json", action="store_true")

    g = sub.add_parser("gen", help="write a synthetic dataset CSV")
    _add_generator_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, metavar="PATH")

    rp = sub.add_parser("replay", help="re-run an experiment from its manifest.json and compare checksums")
    rp.add_argument("manifest", metavar="MANIFEST")
    rp.add_argument("--run-dir", required=True, help="directory for the replayed outputs")
    rp.add_argument("--threads", type=positive_int)
    rp.add_argument("--force", action="store_true")
    return parser


def cmd_run(args) -> int:
    settings = pipeline.Settings(
        config=fed.FedConfig(
            k_clients=args.clients,
            rounds=args.rounds,
            local_epochs=args.epochs,
            lr0=args.lr,
            lr_decay=args.lr_decay,
            noise_std=args.noise_std,
            batch_size=args.batch_size,
            seed=args.seed,
            partition_mode=args.partition,
            shards_per_client=args.shards_per_client,
            weighted_avg=args.weighted_avg,
        ),
        data_path=args.data,
        synthetic=None
        if args.data
        else {
            "rows": args.rows,
            "features": args.features,
            "theft_rate": args.theft_rate,
            "missing_rate": args.missing_rate,
            "seed": args.seed,
        },
        test_fraction=args.test_fraction,
        normalize_before_split=args.normalize_before_split,
        out=args.out,
        run_dir=args.run_dir,
        force=args.force,
        threads=args.threads,
    )
    result = pipeline.run_experiment(settings)
    s = result.summary
    print(PartitionReport([ClientCounts(**r) for r in s["partition"]["clients"]]).to_text())
    f = s["final"]
    print(
        f"final: loss={f['test_loss']:.4f} accuracy={f['accuracy']:.4f} precision={f['precision']:.4f} "
        f"recall={f['recall']:.4f} f1_weighted={f['f1_weighted']:.4f} auc={f['auc']:.4f}"
    )
    print(f"fl_bytes(B=4)={s['cost']['b4']['fl_bytes']} bandwidth_reduction={s['cost']['b4']['bandwidth_reduction']:.6f}")
    print(result.run_dir)
    return 0


def cmd_cost(args) -> int:
    p = nn.param_count(args.features)
    report = _cost.cost_report(args.rounds, args.clients, p, [args.samples], args.features, args.bytes_per_param)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(_cost.format_report(report))
    return 0


def cmd_gen(args) -> int:
    data = dataio.generate_synthetic(args.rows, args.features, args.theft_rate, args.missing_rate, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise FileNotFoundError(f"directory {out.parent} does not exist")
    dataio.write_csv(data, out)
    print(f"wrote {data.n} rows x {data.d} features ({int(data.labels.sum())} theft) to {out}")
    return 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    settings = pipeline.settings_from_manifest(manifest, run_dir=args.run_dir, force=args.force, threads=args.threads)
    result = pipeline.run_experiment(settings)
    bad = pipeline.verify_checksums(result.run_dir, manifest["checksums"])
    if bad:
        _error("ReplayMismatch", f"outputs differ from manifest: {', '.join(bad)}")
        return 1
    print(f"replay matches manifest: {result.run_dir}")
    return 0


COMMANDS = {"run": cmd_run, "cost": cmd_cost, "gen": cmd_gen, "replay": cmd_replay}


def _error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, ArithmeticError) as exc:
        _error(type(exc).__name__, str(exc).replace("\n", " "))
        return 1


if __name__ == "__main__":
    sys.exit(main())
