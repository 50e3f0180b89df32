"""Command-line harness: generate, replay, oracle, compare."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from .metrics import emit_report, inline_dedup_ratio, average_hits
from .oracle import compute_oracle, write_oracle
from .runner import RunConfig, RunMode, run_modes
from .store import IntegrityError
from .trace import TraceError, load_trace, write_trace
from .workload import PRESETS, WorkloadError, load_mix_config, locality_split, mix_streams, preset_mix

EXIT_OK = 0
EXIT_INTEGRITY = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _eif(text: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"eif must be 'auto' or a number, got {text!r}") from None
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("eif must lie in (0, 1]")
    return v


def _add_source(p: argparse.ArgumentParser, trace_positional: bool) -> None:
    if trace_positional:
        p.add_argument("trace", nargs="?", help="trace file; omit when using --preset or --config")
    p.add_argument("--preset", help=f"named workload ({', '.join(PRESETS)})")
    p.add_argument("--config", help="INI file describing a stream mix")
    p.add_argument("--scale", type=float, default=1.0, help="request-count multiplier for presets")
    p.add_argument("--seed", type=int, default=0)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cache-entries", type=int, default=RunConfig.cache_entries)
    p.add_argument("--policy", choices=["lru", "lfu", "arc"], default="lru")
    p.add_argument("--sample-rate", type=float, default=RunConfig.sample_rate)
    p.add_argument("--eif", type=_eif, default=None, help="'auto' (default) or a fixed factor")
    p.add_argument("--epsilon", type=float, default=RunConfig.epsilon, help="admission epsilon")
    p.add_argument("--threshold", type=int, default=RunConfig.threshold, help="initial run threshold")
    p.add_argument("--fixed-threshold", type=int, default=None,
                   help="pin the run threshold (baseline modes default to 4)")
    p.add_argument("--pp-interval", type=int, default=0,
                   help="writes between post-processing passes; 0 runs one final pass")
    p.add_argument("--no-check", action="store_true", help="skip integrity sweeps")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybrid-dedup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic trace")
    _add_source(g, trace_positional=False)
    g.add_argument("--out", required=True, help="trace file to write")

    r = sub.add_parser("replay", help="replay a trace under one or more modes")
    _add_source(r, trace_positional=True)
    r.add_argument("--mode", action="append", choices=[m.value for m in RunMode],
                   help="repeatable; default hybrid")
    _add_run_flags(r)

    c = sub.add_parser("compare", help="A/B replay, default hybrid against idedup-baseline")
    _add_source(c, trace_positional=True)
    c.add_argument("--mode", action="append", choices=[m.value for m in RunMode])
    _add_run_flags(c)

    o = sub.add_parser("oracle", help="exact duplicate counts for a trace")
    _add_source(o, trace_positional=True)
    o.add_argument("--interval", type=int, default=0, help="writes per LDSS window; 0 skips windows")
    o.add_argument("--out", required=True, help="JSON file to write")
    return parser


def _load_source(args):
    """Returns (records, stream_types, seed)."""
    chosen = [x for x in (getattr(args, "trace", None), args.preset, args.config) if x]
    if len(chosen) != 1:
        raise UsageError("give exactly one of a trace path, --preset or --config")
    if getattr(args, "trace", None):
        header, records = load_trace(args.trace)
        types = [header.type_of(s) for s in range(header.stream_count)]
        return records, types, header.generator_seed if header.generator_seed is not None else args.seed
    spec, seed = _mix_from_args(args)
    return mix_streams(spec, seed), spec.stream_types, seed


def _mix_from_args(args):
    if args.config:
        spec, seed = load_mix_config(args.config)
        return spec, args.seed if seed is None else seed
    return preset_mix(args.preset, args.scale, args.seed), args.seed


def cmd_generate(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise UsageError("generate needs exactly one of --preset or --config")
    spec, seed = _mix_from_args(args)
    records = mix_streams(spec, seed)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    write_trace(records, args.out, len(spec.profiles), seed, spec.stream_types)
    writes = sum(r.is_write for r in records)
    l_req, nl_req = locality_split(spec)
    print(f"wrote {len(records)} records ({writes} writes) for {len(spec.profiles)} streams to {args.out}")
    if nl_req:
        print(f"L:NL request ratio {l_req / nl_req:.2f}")
    return EXIT_OK


def cmd_replay(args, default_modes: Sequence[str]) -> int:
    records, types, seed = _load_source(args)
    modes = args.mode or list(default_modes)
    config = RunConfig(
        cache_entries=args.cache_entries,
        policy=args.policy,
        sample_rate=args.sample_rate,
        eif=args.eif,
        epsilon=args.epsilon,
        threshold=args.threshold,
        fixed_threshold=args.fixed_threshold,
        pp_interval=args.pp_interval,
        seed=seed,
        check_integrity=not args.no_check,
    )
    results = run_modes(records, config, modes, types)
    emit_report([r.metrics for r in results], args.out)
    for r in results:
        m = r.metrics
        print(f"{m.mode}: inline ratio {inline_dedup_ratio(m):.4f}, average hits {average_hits(m):.3f}, "
              f"peak blocks {m.peak_blocks}, final blocks {m.final_blocks}")
    if len(results) == 2:
        a, b = results[0].metrics, results[1].metrics
        print(f"inline ratio delta ({a.mode} - {b.mode}): {inline_dedup_ratio(a) - inline_dedup_ratio(b):+.4f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    records, _types, _seed = _load_source(args)
    if args.interval < 0:
        raise UsageError("--interval must be >= 0")
    stats = compute_oracle(records, args.interval or None)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    write_oracle(stats, args.out)
    print(json.dumps({"writes": stats.writes, "duplicates": stats.duplicates, "distinct": stats.distinct}))
    return EXIT_OK


def _validate(args) -> None:
    if getattr(args, "cache_entries", 1) < 1:
        raise UsageError("--cache-entries must be >= 1")
    if not 0.0 < getattr(args, "sample_rate", 0.5) <= 1.0:
        raise UsageError("--sample-rate must lie in (0, 1]")
    if getattr(args, "pp_interval", 0) < 0:
        raise UsageError("--pp-interval must be >= 0")
    if args.scale <= 0:
        raise UsageError("--scale must be positive")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "compare":
            return cmd_replay(args, [RunMode.HYBRID.value, RunMode.IDEDUP_BASELINE.value])
        return cmd_replay(args, [RunMode.HYBRID.value])
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WorkloadError, TraceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print("integrity check failed:", file=sys.stderr)
        for line in exc.problems:
            print(f"  {line}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
