"""Command-line interface for the benchmark experiments.

Exit codes: 0 on success, 1 when a correctness invariant fails, 2 for
configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    BenchConfig,
    ConfigError,
    InvariantFailure,
    config_from_mapping,
    emit_csv,
    run_fusion,
    run_indexing,
    run_mpdata,
    run_verify,
)
from .connectivity import dump_tables
from .topology import PatchSpec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tristencil",
        description="Benchmarks and checks for triangular-grid stencils.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="FILE",
                       help="key=value file; explicit flags win")
        p.add_argument("--rows", type=int)
        p.add_argument("--cols", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--halo", type=int)
        p.add_argument("--numbering", choices=["all", "sn", "un", "hn"])
        p.add_argument("--access", choices=["all", "direct", "indirect"])
        p.add_argument("--executor", choices=["both", "naive", "fused"])
        p.add_argument("--tile-i", type=int, dest="tile_i")
        p.add_argument("--tile-j", type=int, dest="tile_j")
        p.add_argument("--workers", type=int)
        p.add_argument("--align", type=int)
        p.add_argument("--layout", choices=["default", "level-inner"])
        p.add_argument("--warp", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--pivbz", type=float)
        p.add_argument("--preset", choices=["uniform", "gaussian-bump", "random"])
        p.add_argument("--geometry", choices=["uniform", "random"])
        p.add_argument("--include-2d", action="store_true", default=None,
                       help="count 2-D fields in distinct-traffic totals")
        p.add_argument("--nodes-override", type=int, dest="nodes_override")
        p.add_argument("--edges-override", type=int, dest="edges_override")
        p.add_argument("--assert-speedup", action="store_true", default=None,
                       dest="assert_speedup",
                       help="fail when the fused executor is not faster "
                            "(off by default; wall clocks are host-dependent)")
        p.add_argument("--out", metavar="FILE", help="write CSV here instead "
                       "of stdout")

    for name, doc in (
        ("indexing", "neighbor-sum kernels across numberings and access methods"),
        ("fusion", "per-stage versus scratch-ring execution of the transport step"),
        ("mpdata", "upwind transport dwarf timings and correctness"),
    ):
        add_common(sub.add_parser(name, help=doc, description=doc))

    verify = sub.add_parser(
        "verify", help="run the invariant check suite",
        description="Run the invariant check suite.  With --corrupt, one "
        "frozen input is deliberately broken and the command succeeds only "
        "if the suite catches it.")
    add_common(verify)
    verify.add_argument("--corrupt", choices=["edge-signs", "offset-entry"],
                        help="negative control: break this input on purpose")

    dump = sub.add_parser(
        "dump-connectivity",
        help="write all nine neighbor tables as CSV",
        description="Write all nine neighbor tables for one patch as CSV "
        "(from_loc,to_loc,element,slot,neighbor).")
    dump.add_argument("--rows", type=int, default=4)
    dump.add_argument("--cols", type=int, default=4)
    dump.add_argument("--halo", type=int, default=1)
    dump.add_argument("--out", metavar="FILE")
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {text!r}"
                    )
                key, _, value = text.partition("=")
                mapping[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return mapping


def _merge_config(args: argparse.Namespace) -> BenchConfig:
    mapping: dict[str, object] = {}
    if getattr(args, "config", None):
        mapping.update(_read_config_file(args.config))
    for key in ("rows", "cols", "levels", "halo", "numbering", "access",
                "executor", "tile_i", "tile_j", "workers", "align", "layout",
                "warp", "reps", "seed", "steps", "dt", "pivbz", "preset",
                "geometry", "nodes_override", "edges_override",
                "assert_speedup", "out"):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    if getattr(args, "include_2d", None):
        mapping["ignore_2d"] = False
    return config_from_mapping(mapping)


def _emit(records, cfg: BenchConfig) -> None:
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as handle:
            emit_csv(records, handle)
        print(f"wrote {len(records)} records to {cfg.out}")
    else:
        emit_csv(records, sys.stdout)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "dump-connectivity":
            spec = PatchSpec(args.rows, args.cols, 1, args.halo)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as handle:
                    dump_tables(spec, handle)
                print(f"wrote connectivity for {args.rows}x{args.cols} to {args.out}")
            else:
                dump_tables(spec, sys.stdout)
            return 0

        cfg = _merge_config(args)
        if args.command == "indexing":
            _emit(run_indexing(cfg), cfg)
            return 0
        if args.command == "fusion":
            _emit(run_fusion(cfg), cfg)
            return 0
        if args.command == "mpdata":
            _emit(run_mpdata(cfg), cfg)
            return 0
        if args.command == "verify":
            records, checks = run_verify(cfg, corrupt=args.corrupt)
            for name, ok, detail in checks:
                print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
            if cfg.out:
                with open(cfg.out, "w", encoding="utf-8") as handle:
                    emit_csv(records, handle)
            if args.corrupt:
                caught = any(not ok for _, ok, _ in checks)
                if caught:
                    print(f"corruption {args.corrupt!r} was detected")
                    return 0
                print(f"corruption {args.corrupt!r} went UNDETECTED",
                      file=sys.stderr)
                return 1
            return 0 if all(ok for _, ok, _ in checks) else 1
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
