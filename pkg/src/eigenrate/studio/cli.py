"""``eigenrate <study> --config <file>``: run studies, write reports, gate the exit code."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .emit import EmitError, emit
from .runner import StudyError, run_study, thread_count

EXIT_OK = 0
EXIT_GATES = 1
EXIT_CONFIG = 2
EXIT_STUDY = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eigenrate",
        description="Finite-element eigenvalue convergence-rate studies.")
    ap.add_argument("study", help="study name from the config, or 'all'")
    ap.add_argument("--config", required=True,
                    help="INI config file (bare names resolve to packaged configs, e.g. 'acceptance')")
    ap.add_argument("--out", help="output directory (default: [run] out, else ./eigenrate-out)")
    ap.add_argument("--levels", type=int, metavar="K", help="keep only the first K mesh levels")
    ap.add_argument("--family", help="override the element family of the selected studies")
    ap.add_argument("--seq", action="store_true", help="sequential reference mode (overrides EIGENRATE_THREADS)")
    ap.add_argument("--quiet", action="store_true", help="print only the final summary line")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args.config)
        names = run.names() if args.study == "all" else [args.study]
        studies = [run.study(n) for n in names]
        if args.levels is not None:
            if args.levels < 1:
                raise ConfigError("--levels must be positive")
            studies = [s.replace(levels=",".join(map(str, s.levels[:args.levels])))
                       if "levels" in s.values else s for s in studies]
        if args.family:
            studies = [s.replace(family=args.family) if s.kind != "spectrum" else s for s in studies]
        threads = 0 if args.seq else thread_count()
    except ConfigError as exc:
        print(f"eigenrate: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or run.out
    failed = 0
    for cfg in studies:
        try:
            report = run_study(cfg, threads)
            emit(report, out, run.formats)
        except ConfigError as exc:
            print(f"eigenrate: config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (StudyError, EmitError) as exc:
            print(f"eigenrate: {cfg.name}: {exc}", file=sys.stderr)
            return EXIT_STUDY
        for name, gate in report.gates.items():
            failed += not gate.passed
            if not args.quiet:
                print(f"[{'PASS' if gate.passed else 'FAIL'}] {cfg.name}/{name}: {gate.detail}")
    print(f"eigenrate: {len(studies)} studies, {failed} failing gates, reports in {out}")
    return EXIT_OK if failed == 0 else EXIT_GATES


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
