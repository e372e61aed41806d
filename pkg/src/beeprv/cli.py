"""Command-line entry point: ``beeprv {run,verify,experiment,mine-uxs,list-uxs}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from .graph_core import GraphError, PortGraph, generate_family, parse
from .harness import (
    SCALING_FIELDS,
    SuiteError,
    SuiteSpec,
    run_suite,
    scaling_pairs,
    scaling_rows,
)
from .protocols import PROTOCOL_IDS, ProtocolConfig
from .simulator import AgentSpec, BeepModel, Scenario, ScenarioError, run, summary_csv, summary_row
from .uxs import UxsCache, UxsError, format_record, mine_uxs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("beeprv")


class UsageError(Exception):
    pass


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{what} expects comma-separated integers, got {text!r}")


def _graph(args) -> PortGraph:
    if args.graph and args.family:
        raise UsageError("give either --graph or --family, not both")
    if args.graph:
        return parse(Path(args.graph).read_text())
    name, _, size = (args.family or "k2").partition(":")
    try:
        return generate_family(name, int(size) if size else 2)
    except ValueError as exc:
        raise UsageError(str(exc))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--protocol", choices=PROTOCOL_IDS)
    p.add_argument("--labels", help="comma-separated labels")
    p.add_argument("--delays", help="run: delay of the second agent, or both activation rounds")
    p.add_argument("--model", choices=[m.value for m in BeepModel])
    p.add_argument("--n", type=int, help="size bound known to the agents")
    p.add_argument("--budget", help="energy budget per agent (moves)")
    p.add_argument("--round-limit", type=int)
    p.add_argument("--out", help="directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beeprv", description="Rendezvous with detection under beeping.")
    parser.add_argument("--cache", help="UXS cache file (default: the packaged cache)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--graph", help="graph file")
    p.add_argument("--family", help="family:size, e.g. ring:4 (default k2)")
    p.add_argument("--starts", help="start nodes of the two agents")
    _common(p)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", help="shipped suite name or path to a .cfg file")
    p.add_argument("--graphs", help="override the graph source, e.g. enum:3")
    _common(p)

    p = sub.add_parser("experiment", help="scaling experiment on one graph")
    p.add_argument("--protocol", choices=("fast_rv", "bounded_rv"), default="fast_rv")
    p.add_argument("--range", default="1..20", help="j range (fast_rv) or label range (bounded_rv)")
    p.add_argument("--family", help="family:size (default k2)")
    p.add_argument("--graph", help="graph file")
    p.add_argument("--out", help="directory for scaling.csv (default: stdout)")

    p = sub.add_parser("mine-uxs", help="mine, certify and store a UXS")
    p.add_argument("m", type=int)
    p.add_argument("--scope", choices=("all", "families"), default="all")
    p.add_argument("--coverage", choices=("visit", "arrival"), default="visit",
                   help="arrival: every node entered by a move (used by bounded_rv)")
    p.add_argument("--max-length", type=int, default=4096)
    p.add_argument("--max-depth", type=int, default=4)

    sub.add_parser("list-uxs", help="list cached UXS records")
    return parser


def cmd_run(args, cache: UxsCache) -> int:
    g = _graph(args)
    protocol = args.protocol or "rv_detect"
    labels = _ints(args.labels or "1,2", "labels")
    if len(labels) != 2:
        raise UsageError("--labels needs two labels")
    starts = _ints(args.starts, "starts") if args.starts else [0, g.node_count - 1]
    delays = _ints(args.delays or "0", "delays")
    if len(delays) == 1:
        delays = [0, delays[0]]
    if len(starts) != 2 or len(delays) != 2:
        raise UsageError("--starts and --delays take two values (or one delay)")
    n = args.n or g.node_count
    config = ProtocolConfig(protocol, cache, None if protocol == "rv_detect" else n)
    model = BeepModel(args.model or ("global" if protocol == "fast_rv" else "local"))
    config.check_model(model)
    budget = int(args.budget) if args.budget else None
    agents = tuple(AgentSpec(labels[i], starts[i], delays[i], budget) for i in (0, 1))
    limit = args.round_limit or config.default_round_limit(tuple(labels), max(delays))
    scenario = Scenario(g, agents, model, limit)
    trace, outcome = run(scenario, config.factory())
    print(f"{outcome.kind} round={outcome.round} node={outcome.node} moves={trace.moves[0]},{trace.moves[1]}"
          + (f" ({outcome.detail})" if outcome.detail else ""))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.jsonl").write_text(trace.to_jsonl())
        (out / "summary.csv").write_text(summary_csv([summary_row("run", scenario, trace, outcome)]))
    return EXIT_OK if outcome.success else EXIT_FAIL


def cmd_verify(args, cache: UxsCache) -> int:
    spec = SuiteSpec.load(args.suite)
    overrides = {k: v for k, v in (("protocol", args.protocol), ("labels", args.labels),
                                   ("delays", args.delays), ("model", args.model), ("n", args.n),
                                   ("budget", args.budget), ("graphs", args.graphs)) if v is not None}
    spec = dataclasses.replace(spec, **overrides)
    # fail fast on a bad cache rather than in the middle of a suite
    cache.certify_all()

    def progress(done, total):
        log.info("%s: graph %d/%d", spec.name, done, total)

    report = run_suite(spec, cache, progress)
    text = report.render()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{spec.name}.report.txt").write_text(text)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_experiment(args, cache: UxsCache) -> int:
    lo, _, hi = args.range.partition("..")
    try:
        lo_v, hi_v = int(lo), int(hi or lo)
    except ValueError:
        raise UsageError(f"--range expects lo..hi, got {args.range!r}")
    g = _graph(args)
    rows = scaling_rows(args.protocol, cache, scaling_pairs(args.protocol, lo_v, hi_v), g)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    out = open(Path(args.out) / "scaling.csv", "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=SCALING_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if all(r["outcome"] == "success" for r in rows) else EXIT_FAIL


def cmd_mine(args, cache: UxsCache) -> int:
    record = mine_uxs(args.m, cache.cap, args.max_length, args.max_depth, args.scope, args.coverage)
    cache.add(record)
    path = cache.save()
    print(f"{format_record(record)}  -> {path}")
    return EXIT_OK


def cmd_list(args, cache: UxsCache) -> int:
    print("m R certified scope coverage")
    for key in sorted(cache.records):
        try:
            rec = cache.get(*key)
        except UxsError:
            rec = cache.records[key]
        print(f"{rec.size_bound} {rec.length} {'yes' if rec.certified else 'no'} {rec.scope} {rec.coverage}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "experiment": cmd_experiment,
            "mine-uxs": cmd_mine, "list-uxs": cmd_list}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cache = UxsCache.load(args.cache)
        return COMMANDS[args.command](args, cache)
    except UxsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL if args.command == "verify" else EXIT_USAGE
    except (UsageError, SuiteError, ScenarioError, GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
