"""
Synchronous two-agent round engine with local and global beeping.

Round ``g`` (global clock, starting at 0) proceeds as follows: every agent
already activated receives the observation produced by round ``g-1`` (or its
activation observation), both choose actions without seeing each other's,
moves are applied, beeps are resolved on post-move positions, and then
declarations are checked.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from .graph_core import NO_PORT, PortGraph, validate

DEFAULT_ROUND_LIMIT = 100_000


class BeepModel(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


class Heard(enum.Enum):
    BEEP = "beep"   # local model, co-located beeper
    SOFT = "soft"   # global model, beeper elsewhere
    LOUD = "loud"   # global model, co-located beeper

    @property
    def here(self) -> bool:
        """A beep from the same node (local-model semantics)."""
        return self is not Heard.SOFT


@dataclass(frozen=True)
class AgentSpec:
    label: int
    start: int
    activation_round: int = 0
    energy_budget: int | None = None   # None = unlimited


@dataclass(frozen=True)
class Scenario:
    graph: PortGraph
    agents: tuple[AgentSpec, AgentSpec]
    model: BeepModel = BeepModel.LOCAL
    round_limit: int = DEFAULT_ROUND_LIMIT

    @property
    def later_activation(self) -> int:
        return max(a.activation_round for a in self.agents)


@dataclass(frozen=True, slots=True)
class Observation:
    just_activated: bool
    degree: int
    entry_port: int = NO_PORT
    heard: Heard | None = None


@dataclass(frozen=True, slots=True)
class AgentAction:
    port: int | None = None
    beep: bool = False
    declare: bool = False


STAY = AgentAction()
DECLARE = AgentAction(declare=True)


class AgentProgram(Protocol):
    def act(self, obs: Observation) -> AgentAction: ...


class ScenarioError(ValueError):
    pass


class EnergyExhaustedError(RuntimeError):
    pass


def energy_charge(remaining: int | None, moved: bool) -> int | None:
    """Charge one move against the budget; beeping and staying are free."""
    if not moved or remaining is None:
        return remaining
    if remaining <= 0:
        raise EnergyExhaustedError("move attempted with no energy left")
    return remaining - 1


@dataclass(frozen=True)
class Outcome:
    kind: str            # success | false_declaration | timeout | energy_exhausted
    round: int | None = None
    node: int | None = None
    agent: int | None = None
    detail: str = ""

    @property
    def success(self) -> bool:
        return self.kind == "success"

    @classmethod
    def succeeded(cls, round: int, node: int) -> "Outcome":
        return cls("success", round, node)

    @classmethod
    def false_declaration(cls, detail: str, round: int | None = None) -> "Outcome":
        return cls("false_declaration", round, detail=detail)

    @classmethod
    def timeout(cls, limit: int) -> "Outcome":
        return cls("timeout", limit)

    @classmethod
    def energy_exhausted(cls, agent: int, round: int) -> "Outcome":
        return cls("energy_exhausted", round, agent=agent)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    round: int
    agent: int
    position: int
    port: int | None
    beep: bool
    heard: Heard | None
    declared: bool
    moves_used: int

    def to_json(self) -> str:
        return json.dumps({
            "round": self.round,
            "agent": self.agent,
            "position": self.position,
            "motion": "stay" if self.port is None else f"move:{self.port}",
            "sound": "beep" if self.beep else "listen",
            "heard": self.heard.value if self.heard else None,
            "declared": self.declared,
            "moves_used": self.moves_used,
        }, sort_keys=True)


@dataclass
class Trace:
    activations: tuple[int, int]
    records: list[TraceRecord] = field(default_factory=list)
    declarations: list[tuple[int, int, int]] = field(default_factory=list)  # (round, agent, node)
    moves: list[int] = field(default_factory=lambda: [0, 0])
    stop: str = "timeout"        # declared | timeout | energy
    stop_round: int | None = None
    stop_agent: int | None = None
    round_limit: int = DEFAULT_ROUND_LIMIT
    final_positions: list[int] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def classify(trace: Trace) -> Outcome:
    if trace.stop == "energy":
        return Outcome.energy_exhausted(trace.stop_agent, trace.stop_round)
    if trace.declarations:
        rounds = {r for r, _, _ in trace.declarations}
        agents = {a for _, a, _ in trace.declarations}
        nodes = {v for _, _, v in trace.declarations}
        first = min(rounds)
        if len(agents) < 2:
            return Outcome.false_declaration(
                f"only agent {next(iter(agents))} declared in round {first}", first)
        if len(rounds) > 1:
            return Outcome.false_declaration(f"declarations in different rounds {sorted(rounds)}", first)
        if len(nodes) > 1:
            return Outcome.false_declaration(f"declared apart at nodes {sorted(nodes)}", first)
        return Outcome.succeeded(first, nodes.pop())
    return Outcome.timeout(trace.round_limit)


def check_scenario(scenario: Scenario) -> None:
    problems = validate(scenario.graph)
    if problems:
        raise ScenarioError("invalid graph: " + "; ".join(problems))
    if len(scenario.agents) != 2:
        raise ScenarioError("exactly two agents are supported")
    a, b = scenario.agents
    if a.label == b.label:
        raise ScenarioError("agent labels must differ")
    for spec in scenario.agents:
        if spec.label < 1:
            raise ScenarioError("labels must be positive")
        if not 0 <= spec.start < scenario.graph.node_count:
            raise ScenarioError(f"start node {spec.start} not in graph")
        if spec.activation_round < 0:
            raise ScenarioError("activation rounds must be non-negative")
        if spec.energy_budget is not None and spec.energy_budget < 0:
            raise ScenarioError("energy budget must be non-negative")


def run(scenario: Scenario,
        program_factory: Callable[[int], AgentProgram] | Sequence[AgentProgram],
        record: bool = True) -> tuple[Trace, Outcome]:
    """Execute one scenario to a declaration, energy exhaustion or the round limit."""
    check_scenario(scenario)
    g = scenario.graph
    adjacency = g.adjacency
    specs = scenario.agents
    if callable(program_factory):
        programs: list = [None, None]
        factory = program_factory
    else:
        programs = list(program_factory)
        factory = None
    trace = Trace(activations=(specs[0].activation_round, specs[1].activation_round),
                  round_limit=scenario.round_limit)
    local = scenario.model is BeepModel.LOCAL
    pos = [s.start for s in specs]
    energy = [s.energy_budget for s in specs]
    pending: list[Observation | None] = [None, None]
    active = [False, False]
    first_round = min(s.activation_round for s in specs)
    moves = trace.moves

    for rnd in range(first_round, scenario.round_limit):
        actions: list[AgentAction | None] = [None, None]
        for i in (0, 1):
            if not active[i]:
                if specs[i].activation_round != rnd:
                    continue
                active[i] = True
                if factory is not None:
                    programs[i] = factory(specs[i].label)
                pending[i] = Observation(True, len(adjacency[pos[i]]))
            actions[i] = programs[i].act(pending[i])

        entry = [NO_PORT, NO_PORT]
        for i in (0, 1):
            act = actions[i]
            if act is None or act.port is None or act.declare:
                continue
            row = adjacency[pos[i]]
            if not 0 <= act.port < len(row):
                raise ScenarioError(f"agent {i} used invalid port {act.port} at node {pos[i]} in round {rnd}")
            try:
                energy[i] = energy_charge(energy[i], True)
            except EnergyExhaustedError:
                trace.stop, trace.stop_round, trace.stop_agent = "energy", rnd, i
                trace.final_positions = list(pos)
                return trace, classify(trace)
            pos[i], entry[i] = row[act.port]
            moves[i] += 1

        beeping = [a is not None and a.beep and not a.declare for a in actions]
        heard: list[Heard | None] = [None, None]
        for i in (0, 1):
            j = 1 - i
            if actions[i] is None or beeping[i] or not beeping[j]:
                continue
            if pos[i] == pos[j]:
                heard[i] = Heard.BEEP if local else Heard.LOUD
            elif not local:
                heard[i] = Heard.SOFT

        declared = False
        for i in (0, 1):
            act = actions[i]
            if act is None:
                continue
            if act.declare:
                trace.declarations.append((rnd, i, pos[i]))
                declared = True
            if record:
                trace.records.append(TraceRecord(rnd, i, pos[i], None if act.declare else act.port,
                                                 beeping[i], heard[i], act.declare, moves[i]))
            pending[i] = Observation(False, len(adjacency[pos[i]]), entry[i], heard[i])
        if declared:
            trace.stop, trace.stop_round = "declared", rnd
            trace.final_positions = list(pos)
            return trace, classify(trace)

    trace.stop, trace.stop_round = "timeout", scenario.round_limit
    trace.final_positions = list(pos)
    return trace, classify(trace)


def elapsed_since_later(scenario: Scenario, outcome: Outcome) -> int | None:
    """Execution time: rounds from the later activation to the declaration, inclusive."""
    if outcome.round is None or not outcome.success:
        return None
    return outcome.round - scenario.later_activation + 1


SUMMARY_FIELDS = ("scenario", "outcome", "declaration_round", "moves_0", "moves_1", "rounds_since_later")


def summary_row(key: str, scenario: Scenario, trace: Trace, outcome: Outcome) -> dict:
    return {
        "scenario": key,
        "outcome": outcome.kind,
        "declaration_round": outcome.round if outcome.success else "",
        "moves_0": trace.moves[0],
        "moves_1": trace.moves[1],
        "rounds_since_later": elapsed_since_later(scenario, outcome) or "",
    }


def summary_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
