"""
Verification suites and experiments.

A suite is a small ``key = value`` file naming a protocol, a graph source,
labels, delays, a beep model and the bound expressions every scenario must
meet. Expressions are arithmetic over ``L`` (label of the later agent; the
smaller label on a simultaneous start), ``Lmin``, ``Lmax``, ``n`` and ``R``
(the length R(n) of the exploration the protocol runs).
"""

from __future__ import annotations

import ast
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph_core import ENUMERATION_CAP, GraphError, PortGraph, enumerate_port_graphs, generate_family
from .protocols import ProtocolConfig
from .simulator import AgentSpec, BeepModel, Scenario, run
from .sweep import KINDS, FastSweep, RULES, first_asymmetric_meeting, idle_record, record_walk
from .uxs import UxsCache, family_graphs
from .walks import phase_length, phi_walk, t2_transform

log = logging.getLogger(__name__)

SUITES_DIR = Path(__file__).with_name("suites")

_NAMES = {"L", "Lmin", "Lmax", "n", "R"}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
          ast.Add, ast.Sub, ast.Mult, ast.FloorDiv, ast.Pow, ast.USub)


class SuiteError(ValueError):
    pass


def compile_expr(text: str):
    """Restricted arithmetic expression; evaluates on ints or numpy arrays."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise SuiteError(f"bad expression {text!r}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise SuiteError(f"unsupported syntax in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _NAMES:
            raise SuiteError(f"unknown name {node.id!r} in {text!r}; use {', '.join(sorted(_NAMES))}")
    code = compile(tree, "<bound>", "eval")
    return lambda **env: eval(code, {"__builtins__": {}}, env)


def parse_int_range(text: str, **env) -> list[int]:
    """``a..b`` (inclusive, either side an expression), or a comma list."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo_v, hi_v = (int(compile_expr(x)(**env)) if x.strip() else 0 for x in (lo, hi))
        return list(range(lo_v, hi_v + 1))
    if not text:
        return []
    return [int(compile_expr(x)(**env)) for x in text.split(",")]


@dataclass(frozen=True)
class SuiteSpec:
    name: str
    protocol: str
    graphs: str                     # enum:<m> | families:<n> | <family>:<n>[,<family>:<n>...]
    labels: str = "1..8"
    delays: str = "0..0"
    model: str = "local"
    n: int | None = None            # size bound; default: largest graph
    budget: str = "none"            # none | requirement | <int>
    time_bound: str | None = None
    moves_bound: str | None = None
    engine: str = "fast"            # fast | reference

    @classmethod
    def parse(cls, text: str) -> "SuiteSpec":
        values = {}
        for no, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in cls.__dataclass_fields__:
                raise SuiteError(f"line {no}: expected key = value with a known key, got {line!r}")
            values[key] = value.strip()
        for required in ("name", "protocol", "graphs"):
            if required not in values:
                raise SuiteError(f"suite is missing {required!r}")
        if "n" in values:
            values["n"] = int(values["n"])
        return cls(**values)

    @classmethod
    def load(cls, name_or_path: str) -> "SuiteSpec":
        path = Path(name_or_path)
        if not path.exists():
            path = SUITES_DIR / f"{name_or_path}.cfg"
        if not path.exists():
            known = ", ".join(sorted(p.stem for p in SUITES_DIR.glob("*.cfg")))
            raise SuiteError(f"no suite {name_or_path!r}; shipped suites: {known}")
        return cls.parse(path.read_text())


def graph_source(text: str, cap: int = ENUMERATION_CAP) -> list[PortGraph]:
    kind, _, arg = text.partition(":")
    if kind == "enum":
        return list(enumerate_port_graphs(int(arg), cap))
    if kind == "families":
        n = int(arg)
        return [g for g in family_graphs(n) if g.node_count == n]
    graphs = []
    for item in text.split(","):
        name, _, size = item.strip().partition(":")
        try:
            graphs.append(generate_family(name, int(size)))
        except (GraphError, ValueError) as exc:
            raise SuiteError(f"bad graph item {item!r}: {exc}") from exc
    return graphs


def later_label(la, lb, delay):
    """Label of the later agent; on a simultaneous start the smaller one."""
    return np.where(delay == 0, np.minimum(la, lb), lb)


@dataclass
class SuiteReport:
    name: str
    scenarios: int = 0
    kinds: dict[str, int] = field(default_factory=lambda: {k: 0 for k in KINDS})
    violations: int = 0
    examples: list[str] = field(default_factory=list)
    max_time: int = 0
    max_moves: int = 0
    extra: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.scenarios > 0

    def fail(self, message: str) -> None:
        self.violations += 1
        if len(self.examples) < 10:
            self.examples.append(message)

    def render(self) -> str:
        lines = [f"suite {self.name}: {'PASS' if self.passed else 'FAIL'}",
                 f"scenarios {self.scenarios}"]
        lines += [f"  {k} {v}" for k, v in self.kinds.items()]
        lines.append(f"max rounds since later activation {self.max_time}")
        lines.append(f"max moves by one agent {self.max_moves}")
        lines += [f"{k} {v}" for k, v in sorted(self.extra.items())]
        lines.append(f"violations {self.violations}")
        lines += [f"  {e}" for e in self.examples]
        return "\n".join(lines) + "\n"


def _budget(spec: SuiteSpec, config: ProtocolConfig) -> int | None:
    if spec.budget == "none":
        return None
    if spec.budget == "requirement":
        need = config.energy_requirement()
        if need is None:
            raise SuiteError(f"{spec.protocol} has no energy requirement")
        return need
    return int(spec.budget)


def run_suite(spec: SuiteSpec, cache: UxsCache, progress: Callable[[int, int], None] | None = None) -> SuiteReport:
    """Run every scenario of the suite in a fixed order and check the bounds."""
    graphs = graph_source(spec.graphs, cache.cap)
    if not graphs:
        raise SuiteError("suite has no graphs")
    n = spec.n or max(g.node_count for g in graphs)
    config = ProtocolConfig(spec.protocol, cache, n if spec.protocol != "rv_detect" else None)
    model = BeepModel(spec.model)
    config.check_model(model)
    R = config.exploration_length() if spec.protocol != "rv_detect" else 0
    labels = parse_int_range(spec.labels, n=n, R=R)
    delays = np.array(parse_int_range(spec.delays, n=n, R=R), dtype=np.int64)
    pairs = list(itertools.permutations(labels, 2))
    budget = _budget(spec, config)
    config.check_budget(budget)
    time_bound = compile_expr(spec.time_bound) if spec.time_bound else None
    moves_bound = compile_expr(spec.moves_bound) if spec.moves_bound else None
    report = SuiteReport(spec.name)
    if not pairs or not len(delays):
        return report

    use_fast = spec.engine == "fast" and spec.protocol in RULES
    engine = None
    if use_fast:
        # the protocol's own bound on time after the later start, plus slack
        bound = max(config.default_round_limit(p, 0) for p in pairs) // 10
        horizon = int(delays.max()) + bound + 16
        engine = FastSweep(config, graphs, model, horizon, budget)
    factory = config.factory()

    for gid, g in enumerate(graphs):
        for starts in itertools.product(range(g.node_count), repeat=2):
            if use_fast:
                res = engine.batch(gid, starts, pairs, delays)
                la, lb = res.labels[:, 0], res.labels[:, 1]
                _check(report, spec, gid, starts, la, lb, res.delay, res.kind, res.decl,
                       res.moves, n, R, time_bound, moves_bound)
            else:
                _reference_batch(report, spec, config, factory, model, budget, g, gid, starts,
                                 pairs, delays, n, R, time_bound, moves_bound)
        if engine is not None:
            engine.drop_graph(gid)
        if progress:
            progress(gid + 1, len(graphs))
    if engine is not None:
        report.extra["reference runs"] = engine.stats.representatives + engine.stats.fallbacks
    return report


def _check(report, spec, gid, starts, la, lb, delay, kind, decl, moves, n, R, time_bound, moves_bound):
    report.scenarios += len(kind)
    for code, name in enumerate(KINDS):
        report.kinds[name] += int((kind == code).sum())
    ok = kind == 0
    elapsed = np.where(ok, decl - delay + 1, 0)
    env = dict(L=later_label(la, lb, delay), Lmin=np.minimum(la, lb), Lmax=np.maximum(la, lb), n=n, R=R)
    if ok.any():
        report.max_time = max(report.max_time, int(elapsed[ok].max()))
        report.max_moves = max(report.max_moves, int(moves[ok].max()))
    bad = ~ok
    if time_bound is not None:
        bad |= ok & (elapsed > time_bound(**env))
    if moves_bound is not None:
        limit = np.broadcast_to(np.asarray(moves_bound(**env)), kind.shape)
        bad |= (moves > limit[:, None]).any(axis=1)
    for k in np.nonzero(bad)[0]:
        report.fail(f"graph {gid} starts {starts} labels ({la[k]}, {lb[k]}) delay {delay[k]}: "
                    f"{KINDS[kind[k]]}, rounds {elapsed[k] if ok[k] else '-'}, moves {tuple(int(x) for x in moves[k])}")


def _reference_batch(report, spec, config, factory, model, budget, g, gid, starts, pairs, delays,
                     n, R, time_bound, moves_bound):
    rows = []
    for (a, b), d in itertools.product(pairs, delays):
        d = int(d)
        agents = (AgentSpec(a, starts[0], 0, budget), AgentSpec(b, starts[1], d, budget))
        sc = Scenario(g, agents, model, config.default_round_limit((a, b), d))
        trace, outcome = run(sc, factory, record=False)
        rows.append((a, b, d, KINDS.index(outcome.kind), outcome.round if outcome.round is not None else -1,
                     trace.moves[0], trace.moves[1]))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 7)
    _check(report, spec, gid, starts, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
           arr[:, 5:7], n, R, time_bound, moves_bound)


# --- Walk contract ---------------------------------------------------------

@dataclass
class PhiReport:
    scenarios: int = 0
    failures: int = 0
    examples: list[str] = field(default_factory=list)
    max_meeting: int = 0        # two walks
    max_meeting_idle: int = 0   # walk against an idle agent


def phi_window(labels: Iterable[int], cache: UxsCache) -> int:
    """Largest phase-1 plus phase-2 length over the labels."""
    return max(phase_length(L, cache, 1) + phase_length(L, cache, 2) for L in labels)


def phi_contract(cache: UxsCache, graphs: Sequence[PortGraph], labels: Sequence[int],
                 delays: Sequence[int], horizon: int | None = None) -> PhiReport:
    """Every pair of walks (and every walk against an idle agent) co-locates in a
    round active for exactly one of them, for every start pair and delay."""
    delays = np.asarray(delays, dtype=np.int64)
    if horizon is None:
        horizon = int(delays.max()) + 4 * phi_window(labels, cache) + 16
    report = PhiReport()

    def note(found, what):
        report.scenarios += len(found)
        for k in np.nonzero(found < 0)[0]:
            report.failures += 1
            if len(report.examples) < 10:
                report.examples.append(f"{what} delay {delays[k]}: no asymmetric meeting")

    for gid, g in enumerate(graphs):
        walks = {(s, L): record_walk(phi_walk(L, cache), g, s, horizon)
                 for s in range(g.node_count) for L in labels}
        for sa, sb in itertools.product(range(g.node_count), repeat=2):
            for la, lb in itertools.permutations(labels, 2):
                found = first_asymmetric_meeting(walks[sa, la], walks[sb, lb], delays)
                note(found, f"graph {gid} starts ({sa}, {sb}) labels ({la}, {lb})")
                if (found > 0).any():
                    report.max_meeting = max(report.max_meeting, int(found.max()))
            idle = idle_record(sb, horizon)
            for L in labels:
                for first, second, tag in ((walks[sa, L], idle, "walk first"), (idle, walks[sa, L], "idle first")):
                    found = first_asymmetric_meeting(first, second, delays)
                    note(found, f"graph {gid} walker {sa} label {L} idle {sb} {tag}")
                    if (found > 0).any():
                        report.max_meeting_idle = max(report.max_meeting_idle, int(found.max()))
    return report


# --- Symmetry breaking and the fast protocol -------------------------------

@dataclass
class FastReport:
    scenarios: int = 0
    failures: int = 0
    examples: list[str] = field(default_factory=list)
    kinds: dict[str, int] = field(default_factory=lambda: {k: 0 for k in KINDS})
    max_red_excess: int | None = None   # max of (red - later + 1) - |t2(smaller label)|
    max_walker_moves: int = 0
    max_waiter_moves: int = 0

    def fail(self, message: str) -> None:
        self.failures += 1
        if len(self.examples) < 10:
            self.examples.append(message)


def fast_rv_sweep(cache: UxsCache, graphs: Sequence[PortGraph], labels: Sequence[int],
                  delays: Sequence[int]) -> FastReport:
    """Global-model sweep of fast_rv with the symmetry-breaking checks; n is each graph's size."""
    report = FastReport()
    for gid, g in enumerate(graphs):
        n = g.node_count
        config = ProtocolConfig("fast_rv", cache, n)
        factory = config.factory()
        R = config.exploration_length()
        for (sa, sb), (la, lb), d in itertools.product(itertools.product(range(n), repeat=2),
                                                       itertools.permutations(labels, 2), delays):
            d = int(d)
            programs = [factory(la), factory(lb)]
            sc = Scenario(g, (AgentSpec(la, sa, 0), AgentSpec(lb, sb, d)), BeepModel.GLOBAL,
                          config.default_round_limit((la, lb), d))
            trace, outcome = run(sc, programs, record=False)
            report.scenarios += 1
            report.kinds[outcome.kind] += 1
            where = f"graph {gid} starts ({sa}, {sb}) labels ({la}, {lb}) delay {d}"
            if not outcome.success:
                report.fail(f"{where}: {outcome.kind} {outcome.detail}")
                continue
            reds = [p.red_round + act - 1 if p.red_round is not None else None
                    for p, act in zip(programs, (0, d))]
            roles = {p.role for p in programs}
            if None in reds or reds[0] != reds[1] or roles != {"waiting", "walking"}:
                report.fail(f"{where}: red rounds {reds}, roles {[p.role for p in programs]}")
                continue
            excess = (reds[0] - d + 1) - len(t2_transform(min(la, lb)))
            if report.max_red_excess is None or excess > report.max_red_excess:
                report.max_red_excess = excess
            for p, moves in zip(programs, trace.moves):
                if p.role == "waiting":
                    report.max_waiter_moves = max(report.max_waiter_moves, moves)
                else:
                    report.max_walker_moves = max(report.max_walker_moves, moves)
                    if moves > R:
                        report.fail(f"{where}: walking agent moved {moves} > R(n) = {R}")
            waiter = [m for p, m in zip(programs, trace.moves) if p.role == "waiting"]
            if waiter and waiter[0] != 0:
                report.fail(f"{where}: waiting agent moved {waiter[0]} times")
    return report


# --- Scaling experiments ---------------------------------------------------

SCALING_FIELDS = ("label_0", "label_1", "rounds", "moves_0", "moves_1", "outcome")


def scaling_pairs(protocol: str, lo: int, hi: int) -> list[tuple[int, int]]:
    """fast_rv: labels (2^j, 2^j+1) for j in lo..hi; bounded_rv: (l, l+1) for l in lo..hi."""
    if protocol == "fast_rv":
        return [(2**j, 2**j + 1) for j in range(lo, hi + 1)]
    return [(L, L + 1) for L in range(lo, hi + 1)]


def scaling_rows(protocol: str, cache: UxsCache, pairs: Sequence[tuple[int, int]],
                 graph: PortGraph | None = None, delay: int = 0) -> list[dict]:
    graph = graph or generate_family("k2", 2)
    n = graph.node_count
    config = ProtocolConfig(protocol, cache, None if protocol == "rv_detect" else n)
    model = BeepModel.GLOBAL if protocol == "fast_rv" else BeepModel.LOCAL
    rows = []
    for a, b in pairs:
        sc = Scenario(graph, (AgentSpec(a, 0, 0), AgentSpec(b, n - 1, delay)), model,
                      config.default_round_limit((a, b), delay))
        trace, outcome = run(sc, config.factory(), record=False)
        rows.append({"label_0": a, "label_1": b,
                     "rounds": outcome.round - delay + 1 if outcome.success else "",
                     "moves_0": trace.moves[0], "moves_1": trace.moves[1], "outcome": outcome.kind})
    return rows
