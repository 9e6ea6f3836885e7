"""``fedtx-bench``: load and run benchmark workloads from a config file.

Stores are in-memory, so ``run`` always performs its own load phase first;
``load`` alone validates the config and reports what a load produces.

Exit codes: 0 on success, 2 on configuration errors, 3 on storage errors.
"""

from __future__ import annotations

import argparse
import sys

from .bench import Report, build_env, load_phase, run_workload
from .config import parse_config
from .errors import ConfigError, FedtxError


def _write_out(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _render(report: Report, fmt: str) -> str:
    return report.render_csv() if fmt == "csv" else report.render_text()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedtx-bench",
        description="Benchmark harness for the federated transaction manager.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("load", "populate the configured stores and report the load"),
        ("run", "load, then execute the configured workload"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the config file")
        cmd.add_argument("--format", choices=("text", "csv"), default="text")
        cmd.add_argument("--out", default=None, help="output path (default: stdout)")

    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        env = build_env(config)
        loaded = load_phase(env)
        if args.command == "load":
            report = Report(label=config.label)
            report.committed = sum(loaded.values())
            report.per_storage = {
                name: adapter.counters() for name, adapter in env.adapters.items()
            }
            _write_out(_render(report, args.format), args.out)
            return 0
        report = run_workload(env)
        _write_out(_render(report, args.format), args.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FedtxError as exc:
        print(f"storage error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
