"""Command-line entry point: subcommands generate, discover, evaluate, sweep,
and reliability, configured by a JSON document with flag overrides.

Exit codes: 0 on success, 2 on configuration/validation errors, 1 on runtime
failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import PIPELINES, ConfigError, ExperimentConfig, run


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--method", choices=("golem", "bgolem", "fges", "bfges"))
    parser.add_argument("--lambda", dest="lam", type=float, help="sparsity weight")
    parser.add_argument("--edges", help="comma-separated edge-count grid")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalec",
        description="Bayesian causal discovery of effective connectomes",
    )
    sub = parser.add_subparsers(dest="pipeline", required=True)
    for name in PIPELINES:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        _add_common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file does not exist: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    doc["pipeline"] = args.pipeline
    for key in ("method", "lam", "workers", "seed", "out"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.edges is not None:
        try:
            doc["edges"] = [int(tok) for tok in args.edges.split(",") if tok]
        except ValueError as exc:
            raise ConfigError(f"invalid --edges value {args.edges!r}") from exc
    if "out" not in doc:
        raise ConfigError("an output directory is required (--out or config.out)")
    return ExperimentConfig.from_dict(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_brief(result), sort_keys=True))
    return 0


def _brief(result: dict) -> dict:
    """Compact stdout summary: leave file payloads in the output directory."""
    out = {}
    for key, val in result.items():
        if isinstance(val, list):
            out[key] = f"{len(val)} items"
        else:
            out[key] = val
    return out


if __name__ == "__main__":
    sys.exit(main())
