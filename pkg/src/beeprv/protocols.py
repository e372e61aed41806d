"""
Agent programs for rendezvous with detection.

Every program keeps its own round counter, starting at 1 in its activation
round. An observation handed to the program in round r reports what was
heard during round r-1, so "hearing in round s" is processed in round s+1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from .graph_core import NO_PORT, PortGraph, generate_family
from .simulator import (
    DECLARE,
    STAY,
    AgentAction,
    AgentProgram,
    BeepModel,
    Heard,
    Observation,
    ScenarioError,
)
from .uxs import UxsCache
from .walks import (
    ActionStream,
    RoundPlan,
    beeping_exploration,
    beeping_walk,
    modified_beeping_exploration,
    phase_length,
    t2_transform,
)

BEEP = AgentAction(beep=True)

PROTOCOL_IDS = ("rv_detect", "bounded_rv", "fast_rv")


class ConfigurationError(ScenarioError):
    pass


def _from_plan(plan: RoundPlan | None) -> AgentAction:
    if plan is None:
        return STAY
    return AgentAction(plan.port, plan.beep)


class RvWithDetection:
    """Beeping walk until a beep is heard, then the four-round confirmation."""

    def __init__(self, label: int, cache: UxsCache):
        self.label = label
        self.walk = beeping_walk(label, cache)
        self.round = 0
        self.heard_at: int | None = None

    def act(self, obs: Observation) -> AgentAction:
        self.round += 1
        heard = obs.heard is not None and obs.heard.here
        if self.heard_at is None:
            if not heard:
                return _from_plan(self.walk.next(obs))
            self.heard_at = self.round - 1
        s = self.heard_at
        step = self.round - s
        if step == 1:
            return BEEP
        if step == 2:
            return STAY
        if step == 3:
            # obs reports round s+2
            return STAY if heard else DECLARE
        return DECLARE


# The bounded-energy explorations must beep at every node, the explorer's own
# start included, so they run on arrival-coverage sequences.
BLOCK_COVERAGE = "arrival"


def _block(label: int, n: int, cache: UxsCache) -> Iterator[tuple[ActionStream | None, int, bool]]:
    """Segments of the bounded-energy block: (stream or None for idle, rounds or -1, waiting)."""
    rounds = cache.length(n, BLOCK_COVERAGE)
    yield beeping_exploration(n, cache, BLOCK_COVERAGE), 3 * rounds, False
    yield None, 6 * label * rounds, True
    yield beeping_exploration(n, cache, BLOCK_COVERAGE), 3 * rounds, False
    yield None, -1, True


class BoundedEnergyRv:
    """Block: explore, wait 6L*R(n) rounds, explore, wait forever; at most 2R(n) moves."""

    def __init__(self, label: int, n: int, cache: UxsCache):
        self.label = label
        self.n = n
        self.round = 0
        self._segments = _block(label, n, cache)
        self._stream, self._left, self._waiting = next(self._segments)
        self.waiting = False      # flag in force during the last executed round
        self._heard_prev = False  # heard in the round before last
        self.triggered_at: int | None = None
        self._respond_waiting = False

    def _next_plan(self, obs: Observation) -> RoundPlan | None:
        while self._left == 0:
            self._stream, self._left, self._waiting = next(self._segments)
        self._left -= 1
        self.waiting = self._waiting
        if self._stream is None:
            return None
        return self._stream.next(obs)

    def act(self, obs: Observation) -> AgentAction:
        self.round += 1
        if self.triggered_at is None:
            heard = obs.heard is not None and obs.heard.here
            if self.round > 1 and heard and (self.waiting or self._heard_prev):
                self.triggered_at = self.round - 1
                self._respond_waiting = self.waiting
            else:
                self._heard_prev = heard
                return _from_plan(self._next_plan(obs))
        step = self.round - self.triggered_at
        if not self._respond_waiting:
            return DECLARE
        if step <= 2:
            return BEEP
        return DECLARE


class FastBoundedEnergyRv:
    """Symmetry breaking on t2(L) bits, then one agent waits and the other explores once."""

    def __init__(self, label: int, n: int, cache: UxsCache):
        self.label = label
        self.n = n
        self.cache = cache
        self.bits = t2_transform(label)
        self.round = 0
        self.role: str | None = None
        self.red_round: int | None = None
        self.first_heard: int | None = None
        self.loud = False
        self._beeped = []          # own sound per round, for "did I beep in round r-1"
        self._explore: ActionStream | None = None
        self._loud_at: int | None = None

    def _symmetry_step(self, obs: Observation) -> AgentAction:
        if obs.heard is not None:
            r = self.round - 1
            self.first_heard = r
            self.loud = obs.heard is Heard.LOUD
            if r >= 2 and self._beeped[r - 2]:
                self.red_round = r + 1
                self.role = "waiting"
            else:
                self.red_round = r + 2
                self.role = "walking"
            return self._after_symmetry(obs)
        i = self.round
        beep = i <= len(self.bits) and self.bits[i - 1] == 1
        self._beeped.append(beep)
        return BEEP if beep else STAY

    def _after_symmetry(self, obs: Observation) -> AgentAction:
        r = self.round
        if r < self.red_round:
            # walking agent, round first_heard + 1
            return BEEP
        if r == self.red_round and self.loud:
            return DECLARE
        if self.role == "waiting":
            if self._loud_at is None:
                if obs.heard is Heard.LOUD and r > self.red_round:
                    self._loud_at = r - 1
                else:
                    return STAY
            return BEEP if r == self._loud_at + 1 else DECLARE
        if r > self.red_round and obs.heard is Heard.LOUD:
            return DECLARE
        if self._explore is None:
            self._explore = modified_beeping_exploration(self.n, self.cache)
        return _from_plan(self._explore.next(obs))

    def act(self, obs: Observation) -> AgentAction:
        self.round += 1
        if obs.heard is Heard.BEEP:
            raise ConfigurationError("fast_rv requires the global beeping model")
        if self.role is None:
            return self._symmetry_step(obs)
        return self._after_symmetry(obs)


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str
    cache: UxsCache
    n: int | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOL_IDS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOL_IDS)}")
        if self.protocol != "rv_detect":
            if self.n is None or self.n < 1:
                raise ConfigurationError(f"{self.protocol} needs a size bound n >= 1")
            self.cache.get(self.n, self.coverage)

    @property
    def coverage(self) -> str:
        return BLOCK_COVERAGE if self.protocol == "bounded_rv" else "visit"

    def exploration_length(self) -> int:
        """R(n) of the exploration the protocol runs."""
        return self.cache.length(self.n, self.coverage)

    def factory(self) -> Callable[[int], AgentProgram]:
        if self.protocol == "rv_detect":
            return lambda label: RvWithDetection(label, self.cache)
        if self.protocol == "bounded_rv":
            return lambda label: BoundedEnergyRv(label, self.n, self.cache)
        return lambda label: FastBoundedEnergyRv(label, self.n, self.cache)

    def check_model(self, model: BeepModel) -> None:
        if self.protocol == "fast_rv" and model is not BeepModel.GLOBAL:
            raise ConfigurationError("fast_rv requires the global beeping model")

    def energy_requirement(self) -> int | None:
        """Moves each agent may need; None when unbounded."""
        if self.protocol == "bounded_rv":
            return 2 * self.exploration_length()
        if self.protocol == "fast_rv":
            return self.exploration_length()
        return None

    def check_budget(self, budget: int | None) -> None:
        need = self.energy_requirement()
        if need is not None and budget is not None and budget < need:
            raise ConfigurationError(f"{self.protocol} needs an energy budget of at least {need}, got {budget}")

    def time_bound(self, later_label: int, labels: tuple[int, int]) -> int | None:
        """Proof-level bound on rounds from the later activation to the declaration."""
        if self.protocol == "bounded_rv":
            return (2 * later_label + 2) * 3 * self.exploration_length() + 3
        return None

    def default_round_limit(self, labels: tuple[int, int], delay: int = 0) -> int:
        big = max(labels)
        if self.protocol == "bounded_rv":
            bound = (2 * big + 2) * 3 * self.exploration_length() + 3
        elif self.protocol == "fast_rv":
            bound = len(t2_transform(big)) + 6 + 2 * self.exploration_length() + 2
        else:
            bound = 2 * sum(phase_length(big, self.cache, k) for k in (1, 2, 3)) + 4
        return delay + 10 * bound


def run_solo(program: AgentProgram, g: PortGraph, start: int, rounds: int) -> list[tuple[AgentAction, int]]:
    """An agent alone in the graph; it never hears anything."""
    v = start
    obs = Observation(True, g.degree(v))
    out = []
    for _ in range(rounds):
        act = program.act(obs)
        entry = NO_PORT
        if act.port is not None and not act.declare:
            v, entry = g.adjacency[v][act.port]
        out.append((act, v))
        if act.declare:
            break
        obs = Observation(False, g.degree(v), entry)
    return out


def move_pattern(algorithm: Callable[[int], AgentProgram], label: int, rounds: int) -> tuple[int, ...]:
    """Solo execution on the two-node graph: 1 in each round the agent moves."""
    k2 = generate_family("k2", 2)
    steps = run_solo(algorithm(label), k2, 0, rounds)
    pattern = [1 if act.port is not None and not act.declare else 0 for act, _ in steps]
    return tuple(pattern + [0] * (rounds - len(pattern)))


def pattern_count_bound(c: int, T: int) -> int:
    return 2 * T**c


def find_colliding_labels(c: int, T: int, M: int,
                          algorithm: Callable[[int], AgentProgram],
                          strict: bool = True) -> tuple[int, int] | None:
    """Two labels in [1, M] whose solo move patterns over rounds 1..T coincide.

    Returns None when all M patterns are distinct. With ``strict`` a pattern
    with more than ``c`` moves is rejected as the algorithm is not c-bounded.
    """
    if c < 1 or T < 1 or M < 2:
        raise ValueError("need c >= 1, T >= 1, M >= 2")
    seen: dict[tuple[int, ...], int] = {}
    for label in range(1, M + 1):
        pattern = move_pattern(algorithm, label, T)
        if strict and sum(pattern) > c:
            raise ValueError(f"label {label} moves {sum(pattern)} times in {T} rounds; not {c}-bounded")
        if pattern in seen:
            return seen[pattern], label
        seen[pattern] = label
    return None


def all_patterns(algorithm: Callable[[int], AgentProgram], M: int, T: int) -> dict[int, tuple[int, ...]]:
    return {label: move_pattern(algorithm, label, T) for label in range(1, M + 1)}
