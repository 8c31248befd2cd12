"""
Command-line entry point.

    chainmas run [--config PATH] [--seed N] [--rounds N] [--out DIR]
    chainmas verify CHAIN
    chainmas report METRICS

Exit codes: 0 success, 1 unreadable or invalid input, 2 runtime failure,
3 integrity violation found by ``verify``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .chaincore import find_violation, keccak256, read_chain_jsonl
from .errors import ConfigError
from .simenv.config import RunConfig, load_config
from .simenv.loop import run_simulation
from .simenv.metrics import format_table, read_metrics_csv

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME, EXIT_VIOLATION = 0, 1, 2, 3


@dataclass(frozen=True)
class RunManifest:
    config_path: str | None
    seed: int
    out_dir: str
    run_id: str

    @staticmethod
    def make_run_id(config_bytes: bytes, seed: int) -> str:
        """Short hex id fixed by the config file's bytes and the seed."""
        return keccak256(config_bytes + b"\x00" + str(seed).encode()).hex()[:12]


def cmd_run(args) -> int:
    config_bytes = b""
    try:
        if args.config:
            config_bytes = Path(args.config).read_bytes()
            cfg = load_config(args.config)
        else:
            cfg = RunConfig()
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.rounds is not None:
            changes["rounds"] = args.rounds
        cfg = cfg.with_(**changes)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    manifest = RunManifest(args.config, cfg.seed, str(args.out),
                           RunManifest.make_run_id(config_bytes, cfg.seed))
    try:
        result = run_simulation(cfg)
        paths = result.write(args.out)
        (Path(args.out) / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to one exit code
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"run {manifest.run_id}: {cfg.rounds} rounds, seed {cfg.seed}, "
          f"{len(result.chain)} blocks, tip {result.chain.tip.block_hash.hex()}")
    for name, path in paths.items():
        print(f"  {name:8s} {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        blocks = read_chain_jsonl(args.chain)
    except (OSError, ValueError) as exc:
        print(f"cannot read chain: {exc}", file=sys.stderr)
        return EXIT_INPUT
    problem = find_violation(blocks)
    if problem is not None:
        print(f"INVALID: {problem}")
        return EXIT_VIOLATION
    n_events = sum(len(b.events) for b in blocks)
    print(f"OK: {len(blocks)} blocks, {n_events} events, tip {blocks[-1].block_hash.hex()}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        metrics = read_metrics_csv(args.metrics)
    except (OSError, ValueError) as exc:
        print(f"cannot read metrics: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(format_table(metrics))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainmas", description="Ledger-coordinated multi-agent simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation and write its artifacts")
    run.add_argument("--config", help="YAML run file (defaults apply when omitted)")
    run.add_argument("--seed", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="check a chain.jsonl export")
    verify.add_argument("chain")
    verify.set_defaults(func=cmd_verify)

    report = sub.add_parser("report", help="summarize a metrics.csv file")
    report.add_argument("metrics")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
