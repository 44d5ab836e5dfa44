"""Command-line front end.

Without ``--config`` the whole suite is evaluated and printed as a verdict
table.  With ``--config`` a single target is run, optionally under one
packaged attack.  Exit codes: 0 success, 1 golden mismatch under
``--check``, 2 bad arguments, 3 inapplicable configuration.
"""

from __future__ import annotations

import argparse
import sys

from .attacks import ATTACKS, UnknownAttack, run_attack
from .channel import UnderivableInjection
from .configs import (FIX_NAMES, InapplicableConfig, UnknownConfig, applicability, by_name,
                      enumerate_configs, require_applicable)
from .properties import PROPERTIES, check_executability, secrecy_labels
from .protocol.world import World
from .report import (RENDERERS, NoReference, compare, evaluate, expected_rows,
                     plot_matrix, run_matrix, write_report)
from .search import DEFAULT_BUDGET, explore

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_INAPPLICABLE = 0, 1, 2, 3


def parse_fixes(text: str) -> tuple[str, ...]:
    if not text:
        return ()
    fixes = tuple(sorted({f.strip() for f in text.split(",") if f.strip()}))
    bad = [f for f in fixes if f not in FIX_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown fix {bad[0]!r}; choose from {', '.join(FIX_NAMES)}")
    return fixes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emvsym",
                                description="Symbolic analysis of EMV contact and contactless "
                                            "transactions.")
    p.add_argument("--suite", choices=("contact", "contactless", "all"), default="all",
                   help="configurations to evaluate in matrix mode (default: all)")
    p.add_argument("--config", help="run a single target configuration by name")
    p.add_argument("--attack", help="packaged attack script to run against --config")
    p.add_argument("--fixes", type=parse_fixes, default=(), metavar="LIST",
                   help="comma-separated fixes to activate: 1,2,3a,3b")
    p.add_argument("--search-budget", type=int, default=DEFAULT_BUDGET, metavar="N",
                   help="maximum mutations per search run (default: %(default)s)")
    p.add_argument("--format", choices=sorted(RENDERERS), default="text")
    p.add_argument("--dump-trace", action="store_true",
                   help="print the event log and APDU transcript (single-config mode)")
    p.add_argument("--check", action="store_true",
                   help="compare verdicts with the packaged reference tables")
    p.add_argument("--seed", type=int, default=0, help="numbering seed for fresh values")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for matrix rows")
    p.add_argument("--output", metavar="DIR",
                   help="also write txt, csv, json and a PNG figure of the matrix to DIR")
    p.add_argument("--plot", metavar="PATH", help="write the verdict figure to PATH")
    p.add_argument("--list-attacks", action="store_true")
    p.add_argument("--list-configs", action="store_true")
    return p


def _list_configs(out) -> None:
    for c in enumerate_configs():
        ok, reason, remark = applicability(c)
        note = "" if ok else f"  not applicable{f' ({remark})' if remark else ''}: {reason}"
        print(f"{c.name}{note}", file=out)


def _list_attacks(out) -> None:
    width = max(len(n) for n in ATTACKS)
    for name, info in ATTACKS.items():
        print(f"{name.ljust(width)}  {info.description}", file=out)


def _verdict_lines(verdicts) -> list[str]:
    return [str(v) for v in verdicts.values()]


def _dump(world, out) -> None:
    print("-- events", file=out)
    print(world.trace.dump(), file=out)
    print("-- transcript", file=out)
    print(world.transcript(), file=out)


def run_one(args, out) -> int:
    cfg = by_name(args.config, args.fixes)
    if args.attack:
        if args.attack not in ATTACKS:
            raise UnknownAttack(args.attack)
        require_applicable(cfg)
        outcome = run_attack(cfg, args.attack, seed=args.seed)
        print(f"{cfg.name} under {args.attack}", file=out)
        for r in outcome.results:
            reason = f" ({r.reason})" if r.reason else ""
            print(f"transaction {r.index}: {r.verdict}{reason}", file=out)
        for line in _verdict_lines(outcome.verdicts):
            print(line, file=out)
        print("secrecy: " + ", ".join(f"{k}={'secret' if v else 'leaked'}"
                                      for k, v in outcome.secrecy.items()), file=out)
        if args.dump_trace:
            _dump(outcome.world, out)
        return EXIT_OK

    require_applicable(cfg)
    world = World(cfg, seed=args.seed)
    result = world.run_transaction()
    reason = f" ({result.reason})" if result.reason else ""
    print(f"{cfg.name}: honest transaction {result.verdict}{reason}", file=out)
    print(str(check_executability(world.trace)), file=out)
    found = explore(cfg, args.search_budget, seed=args.seed)
    for p in PROPERTIES:
        v = found.verdict(p)
        line = str(v)
        if not v.holds:
            line += "  witness: " + " ".join(f"{i}:{m}" for i, m in v.mutations)
        print(line, file=out)
    print("secrecy (honest run): " + ", ".join(f"{k}={'secret' if v else 'leaked'}"
                                              for k, v in secrecy_labels(world.trace,
                                                                         world.knowledge).items()),
          file=out)
    print(f"search runs: {found.runs}", file=out)
    if args.dump_trace:
        _dump(world, out)
    if args.check:
        row = evaluate(cfg, budget=args.search_budget, seed=args.seed)
        want = expected_rows(args.fixes)[cfg.name]
        if row.golden() != want:
            print(f"check failed: expected {want[1:]}, got {row.golden()[1:]}", file=out)
            return EXIT_MISMATCH
        print("check passed", file=out)
    return EXIT_OK


def run_matrix_mode(args, out) -> int:
    if args.check:
        expected_rows(args.fixes)  # fail early when there is no reference
    m = run_matrix(args.suite, args.fixes, args.search_budget, args.seed, jobs=args.jobs)
    out.write(RENDERERS[args.format](m))
    if args.output:
        for path in write_report(m, args.output):
            print(f"wrote {path}", file=sys.stderr)
    if args.plot:
        print(f"wrote {plot_matrix(m, args.plot)}", file=sys.stderr)
    if args.check:
        mismatches = compare(m)
        for mm in mismatches:
            print(f"MISMATCH {mm}", file=sys.stderr)
        if mismatches:
            return EXIT_MISMATCH
        print(f"check passed: {len(m.rows)} rows match the reference", file=sys.stderr)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.search_budget < 0:
        parser.error("--search-budget must be non-negative")
    if args.list_configs or args.list_attacks:
        if args.list_configs:
            _list_configs(out)
        if args.list_attacks:
            _list_attacks(out)
        return EXIT_OK
    if args.attack and not args.config:
        parser.error("--attack needs --config")
    try:
        if args.config:
            return run_one(args, out)
        return run_matrix_mode(args, out)
    except UnknownConfig as e:
        print(f"error: unknown configuration {e.args[0]!r} (see --list-configs)", file=sys.stderr)
        return EXIT_USAGE
    except UnknownAttack as e:
        print(f"error: unknown attack {e.args[0]!r} (see --list-attacks)", file=sys.stderr)
        return EXIT_USAGE
    except NoReference as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InapplicableConfig as e:
        remark = f" ({e.remark})" if e.remark else ""
        print(f"{e.config.name}: not applicable{remark}: {e.reason}", file=out)
        return EXIT_INAPPLICABLE
    except UnderivableInjection as e:
        print(f"error: attack needs a term the attacker cannot derive: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
