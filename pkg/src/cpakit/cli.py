"""Command-line driver: ``cpakit {attack,simulate,bench,export-curves,inspect}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import bench
from .engine import AUTO, MATERIALIZED, ON_THE_FLY, AttackConfig, attack
from .synth import SynthConfig, generate_dataset
from .trace_model import (
    TraceFileError,
    load_ciphertexts,
    load_traces,
    read_header,
    save_ciphertexts,
    save_traces,
)


class CliError(Exception):
    pass


def parse_key(text: str) -> bytes:
    if len(text) != 32:
        raise CliError(f"key must be 32 hex characters, got {len(text)}")
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise CliError(f"key is not valid hex: {text!r}") from None


def parse_workers(text: str) -> list[int]:
    try:
        counts = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return counts


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--traces", required=True, help="trace file")
    p.add_argument("--ciphertexts", required=True, help="ciphertext hex-line file")
    p.add_argument("--format", choices=("binary", "csv"), default="binary", help="trace file format")
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.add_argument("--chunk", type=_positive, default=4096, help="samples per Phase 2/3 chunk")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--table-mode", choices=(AUTO, MATERIALIZED, ON_THE_FLY), default=AUTO)


def _config(args, export_curves: bool = False) -> AttackConfig:
    return AttackConfig(
        precision=args.precision, chunk=args.chunk, workers=args.workers,
        table_mode=args.table_mode, export_curves=export_curves,
    )


def _load(args):
    traces = load_traces(args.traces, args.format)
    ciphertexts = load_ciphertexts(args.ciphertexts)
    return traces, ciphertexts


def write_curves(path, result) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["byte_position", "subkey", "sample", "rho"])
        for b in range(result.curves.shape[0]):
            k = int(result.ranking[b, 0])
            for j, rho in enumerate(result.curves[b]):
                writer.writerow([b, f"{k:02x}", j, repr(float(rho))])


def cmd_attack(args) -> int:
    traces, ciphertexts = _load(args)
    result = attack(traces, ciphertexts, _config(args, export_curves=bool(args.export_curves)))
    if args.export_curves:
        write_curves(args.export_curves, result)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
        return 0
    print(f"{'byte':>4}  {'subkey':>6}  {'|rho|':>8}  {'margin':>8}  {'sample':>6}")
    for entry in result.to_dict()["bytes"]:
        print(
            f"{entry['byte_position']:>4}  {format(entry['subkey'], '02x'):>6}  {entry['rho']:8.5f}  "
            f"{entry['margin']:8.5f}  {entry['sample']:>6}"
        )
    print(f"round10 key: {result.round10_key.hex()}")
    print(f"master key:  {result.master_key.hex()}")
    return 0


def cmd_export_curves(args) -> int:
    traces, ciphertexts = _load(args)
    result = attack(traces, ciphertexts, _config(args, export_curves=True))
    write_curves(args.out, result)
    print(f"wrote {result.curves.shape[0]} curves of {traces.m} samples to {args.out}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    cfg = SynthConfig(
        key=parse_key(args.key), n=args.n, m=args.m, noise_sigma=args.sigma,
        signal_scale=args.scale, offset=args.offset, seed=args.seed, precision=args.precision,
    )
    traces, ciphertexts = generate_dataset(cfg)
    save_traces(traces, f"{args.out_prefix}.traces")
    save_ciphertexts(ciphertexts, f"{args.out_prefix}.ct")
    return 0


def cmd_bench(args) -> int:
    synth = SynthConfig(key=parse_key(args.key), n=args.synth_n, m=args.synth_m, noise_sigma=args.sigma, seed=args.seed)
    config = AttackConfig(precision=args.precision, chunk=args.chunk)
    reports = bench.run_benchmark(synth, args.workers, args.reps, config)
    text = bench.to_csv(reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(bench.format_table(reports), file=sys.stderr)
    return 0


def cmd_inspect(args) -> int:
    header = read_header(args.path)
    print(f"n: {header['n']}")
    print(f"m: {header['m']}")
    print(f"precision: {header['precision'].name.lower()}")
    print(f"layout: {header['layout'].name.lower().replace('_', '-')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpakit", description="Correlation power analysis on AES-128.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="recover the key from traces and ciphertexts")
    _engine_flags(p)
    p.add_argument("--export-curves", metavar="PATH", help="also write rho curves of the winning subkeys")
    p.add_argument("--json", action="store_true", help="print the result as JSON")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--key", required=True, help="32 hex characters")
    p.add_argument("--n", type=_positive, default=1000)
    p.add_argument("--m", type=_positive, default=128)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time the attack phases on synthetic data")
    p.add_argument("--synth-n", type=_positive, default=1000)
    p.add_argument("--synth-m", type=_positive, default=1000)
    p.add_argument("--workers", type=parse_workers, default=[1], help="comma-separated worker counts")
    p.add_argument("--reps", type=_positive, default=3)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--key", default="000102030405060708090a0b0c0d0e0f")
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.add_argument("--chunk", type=_positive, default=4096)
    p.add_argument("--out", help="CSV destination (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-curves", help="write rho curves of each byte's best subkey")
    _engine_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_curves)

    p = sub.add_parser("inspect", help="print a binary trace file's header")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, TraceFileError, ValueError, OSError) as exc:
        print(f"cpakit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
