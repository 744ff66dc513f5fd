"""Command line entry point: ``cesaro run | list-scenarios | acceptance``.

Exit codes: 0 success, 1 a probe errored or an acceptance criterion failed,
2 the configuration was rejected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, runner, scenarios

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        cfg = runner.load_config(args.config)
    except runner.ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else None
    man = runner.run(cfg, out, plots=False if args.no_plots else None)
    print(runner.summary_table(man))
    return EXIT_FAIL if man.partial else EXIT_OK


def _cmd_list(args) -> int:
    rows = scenarios.table_rows()
    if args.json:
        print(json.dumps([dict(id=a, reproduces=b, targets=c) for a, b, c in rows], indent=2))
        return EXIT_OK
    w = max(len(r[0]) for r in rows)
    for sid, what, targets in rows:
        print(f"{sid:<{w}}  {what}\n{'':<{w}}    {targets}")
    return EXIT_OK


def _cmd_acceptance(args) -> int:
    from . import acceptance

    only = [int(x) for x in args.only.split(",")] if args.only else None
    rep = acceptance.run_acceptance(args.seed, args.quick, only=only,
                                    rerun=not args.no_rerun, progress=print)
    if args.json:
        Path(args.json).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    n_pass = sum(r.passed for r in rep.results)
    print(f"{n_pass}/{len(rep.results)} criteria passed (seed {rep.seed}"
          f"{', quick' if rep.quick else ''})")
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    from .acceptance import DEFAULT_SEED

    ap = argparse.ArgumentParser(prog="cesaro", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the probes listed in a TOML or JSON config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default: ${runner.OUTPUT_ENV}/<scenario>-<hash>)")
    r.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    r.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="registered scenarios and their targets")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(func=_cmd_list)

    a = sub.add_parser("acceptance", help="run the acceptance criteria")
    a.add_argument("--seed", type=int, default=DEFAULT_SEED)
    a.add_argument("--quick", action="store_true", help="reduced sample sizes")
    a.add_argument("--only", help="comma-separated criterion numbers")
    a.add_argument("--no-rerun", action="store_true",
                   help="skip the determinism rerun inside criterion 10")
    a.add_argument("--json", metavar="PATH", help="write the full report as JSON")
    a.set_defaults(func=_cmd_acceptance)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
