"""Command line entry point: ``mvbbo run | suite | plot``.

Exit status is 0 on success, 1 for configuration errors and 2 when a run fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_plot,
    read_stats_csv,
    run_experiment,
    suite_configs,
    write_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _parse_value(text: str) -> Any:
    """JSON when it parses (numbers, lists, objects, true/false/null), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _field_flags() -> List[str]:
    return [f.name for f in dataclasses.fields(ExperimentConfig)]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvbbo", description="Mixed-variable optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True, help="JSON file with ExperimentConfig fields")
    for name in _field_flags():
        run.add_argument(
            "--" + name.replace("_", "-"),
            dest=name,
            type=_parse_value,
            default=None,
            help=argparse.SUPPRESS if name not in ("seed", "trials", "out") else None,
        )

    suite = sub.add_parser("suite", help="run the benchmark grid")
    suite.add_argument("--out", required=True)
    suite.add_argument("--trials", type=int, default=5)
    suite.add_argument("--scale", type=float, default=1.0, help="budget multiplier")
    suite.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plot", help="draw a stats CSV as SVG")
    plot.add_argument("--in", dest="inp", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--kind", choices=("best_fitness", "hypervolume"), default="best_fitness")
    plot.add_argument("--title", default="")
    return parser


def _load_run_config(args: argparse.Namespace) -> ExperimentConfig:
    try:
        with open(args.config, encoding="utf-8") as fh:
            data: Dict[str, Any] = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {args.config} must hold a JSON object")
    for name in _field_flags():
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    return ExperimentConfig.from_dict(data)


def _cmd_run(args: argparse.Namespace) -> None:
    cfg = _load_run_config(args)
    records = run_experiment(cfg)
    paths = write_outputs(cfg, records, cfg.out)
    for key, path in paths.items():
        print(f"{key}: {path}")


def _cmd_suite(args: argparse.Namespace) -> None:
    if args.trials < 1 or args.scale <= 0:
        raise ConfigError("suite needs trials >= 1 and a positive scale")
    out = Path(args.out)
    for name, cfg in suite_configs(args.trials, args.scale, args.seed):
        cfg.out = str(out / name)
        cfg = cfg.resolved()
        records = run_experiment(cfg)
        write_outputs(cfg, records, cfg.out)
        print(f"{name}: {cfg.out}")


def _cmd_plot(args: argparse.Namespace) -> None:
    try:
        stats = read_stats_csv(args.inp, args.kind)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.inp}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(emit_plot(stats, args.out, title=args.title))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"run": _cmd_run, "suite": _cmd_suite, "plot": _cmd_plot}[args.command]
        handler(args)
    except ConfigError as exc:
        print(f"mvbbo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside a run maps to one exit code
        print(f"mvbbo: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
