"""Command line: ``modelfree run|compare|catalog``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..control import ConfigurationError
from .catalog import catalog
from .config import load_configs, parse_override
from .runner import compare, run_scenario


def _overrides(args) -> dict:
    out = dict(parse_override(s) for s in args.set or [])
    if args.seed is not None:
        out["noise.seed"] = args.seed
    if args.noiseless:
        out["noise.variance"] = 0.0
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted path)")
    p.add_argument("--out", type=Path, default=None, help="directory for traces, metrics and metadata")
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.add_argument("--noiseless", action="store_true", help="disable measurement noise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelfree", description="Model-free control benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a catalogue scenario or a TOML config")
    run.add_argument("scenario", help="label, label:variant or path to a .toml file")
    _add_common(run)
    cmp_ = sub.add_parser("compare", help="run scenarios side by side and print rms ratios")
    cmp_.add_argument("scenarios", nargs="+", help="labels or label:variant; one label expands to its variants")
    _add_common(cmp_)
    sub.add_parser("catalog", help="list built-in scenarios")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            for entry in catalog():
                print(f"{entry.label:<28} {entry.figure:<14} {', '.join(entry.variants):<36} {entry.description}")
            return 0
        overrides = _overrides(args)
        if args.command == "run":
            status = 0
            for cfg in load_configs(args.scenario, overrides):
                art = run_scenario(cfg)
                where = f" -> {art.write(args.out)}" if args.out else ""
                if art.ok:
                    print(f"{cfg.name}: rms {art.rms:.6g}{where}")
                else:
                    print(f"{cfg.name}: diverged at t={art.diverged_at:.6g}{where}", file=sys.stderr)
                    status = 2
            return status
        configs = [c for label in args.scenarios for c in load_configs(label, overrides)]
        result = compare(configs)
        print(result.format())
        if args.out:
            for art in result.artifacts:
                art.write(args.out)
        return 0 if all(a.ok for a in result.artifacts) else 2
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
