"""
Per-round action streams shared by all protocols.

A stream is a coroutine: each round it is handed what the agent sees on
arrival (anything with ``degree`` and ``entry_port`` attributes, normally a
simulator Observation) and answers with a RoundPlan. Streams never look at
sounds; reacting to beeps is the protocols' job.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generator, Iterator, NamedTuple

from .graph_core import NO_PORT, PortGraph
from .uxs import UxsCache, UxsError, exp_step

MAX_LABEL = 2**64 - 1


@dataclass(frozen=True, slots=True)
class RoundPlan:
    """One round: ``port`` is None to stay; ``beep`` False means listen.

    ``active`` marks a round in which the walk means to move. It differs from
    ``port is not None`` only on an isolated node, where a move degenerates
    to staying in place.
    """

    port: int | None = None
    beep: bool = False
    active: bool = False

    @property
    def moves(self) -> bool:
        return self.port is not None


LISTEN = RoundPlan()


class Locale(NamedTuple):
    degree: int
    entry_port: int = NO_PORT


PlanGen = Generator[RoundPlan, object, None]


class ActionStream:
    """Single-consumer wrapper around a plan coroutine."""

    def __init__(self, gen: PlanGen):
        self._gen = gen
        next(gen)
        self.done = False
        self.emitted = 0

    def next(self, locale) -> RoundPlan | None:
        if self.done:
            return None
        try:
            plan = self._gen.send(locale)
        except StopIteration:
            self.done = True
            return None
        self.emitted += 1
        return plan


def _check_label(label: int) -> None:
    if not 1 <= label <= MAX_LABEL:
        raise ValueError(f"label must be in [1, 2^64-1], got {label}")


def label_bits(label: int) -> list[int]:
    _check_label(label)
    return [int(c) for c in bin(label)[2:]]


def t1_transform(label: int) -> list[int]:
    out = [0, 1]
    for c in label_bits(label):
        out += [c, c]
    return out + [0, 1]


def t2_transform(label: int) -> list[int]:
    out = []
    for b in t1_transform(label):
        out += [1, 0] if b else [0, 0]
    return out


def _exp_moves(steps) -> PlanGen:
    locale = yield
    entry = NO_PORT
    for x in steps:
        port = exp_step(entry, locale.degree, x)
        locale = yield RoundPlan(None if port == NO_PORT else port, False, True)
        entry = locale.entry_port


def _phi_moves(label: int, cache: UxsCache, cap: int) -> PlanGen:
    bits = t1_transform(label)
    locale = yield
    nu = 1
    while True:
        m = min(2**nu, cap)
        steps = cache.get(m).steps
        for bit in bits:
            if bit:
                trail = []
                entry = NO_PORT
                for x in steps:
                    port = exp_step(entry, locale.degree, x)
                    locale = yield RoundPlan(None if port == NO_PORT else port, False, True)
                    entry = locale.entry_port
                    trail.append(entry)
                for back in reversed(trail):
                    locale = yield RoundPlan(None if back == NO_PORT else back, False, True)
            else:
                for _ in range(2 * len(steps)):
                    locale = yield LISTEN
        if m < cap:
            nu += 1


def _stretch(inner: PlanGen, pad: int) -> PlanGen:
    """Each inner round becomes: (inner motion, beep iff active), then ``pad`` silent stays."""
    next(inner)
    locale = yield
    while True:
        try:
            plan = inner.send(locale)
        except StopIteration:
            return
        arrived = yield RoundPlan(plan.port, plan.active, plan.active)
        for _ in range(pad):
            yield LISTEN
        locale = arrived


def phi_walk(label: int, cache: UxsCache, cap: int | None = None) -> ActionStream:
    """Label-driven walk whose meetings are active for exactly one agent.

    Phase k explores with size guess min(2^k, cap). Inside a phase every bit of
    t1(label) takes 2R rounds: a 1 runs EXP and backtracks to the phase anchor,
    a 0 idles.
    """
    _check_label(label)
    return ActionStream(_phi_moves(label, cache, cap or cache.cap))


def beeping_walk(label: int, cache: UxsCache, cap: int | None = None) -> ActionStream:
    _check_label(label)
    return ActionStream(_stretch(_phi_moves(label, cache, cap or cache.cap), 1))


def _require(cache: UxsCache, n: int, coverage: str = "visit"):
    try:
        return cache.get(n, coverage)
    except UxsError as exc:
        raise UxsError(f"uncertified size bound {n}: {exc}") from exc


def beeping_exploration(n: int, cache: UxsCache, coverage: str = "visit") -> ActionStream:
    """3R(n) rounds: move+beep, listen, listen per EXP step.

    With ``coverage="arrival"`` the walk enters every node by a move, so it
    beeps at every node, its start included.
    """
    return ActionStream(_stretch(_exp_moves(_require(cache, n, coverage).steps), 2))


def modified_beeping_exploration(n: int, cache: UxsCache) -> ActionStream:
    """2R(n) rounds: move+beep, listen per EXP step."""
    return ActionStream(_stretch(_exp_moves(_require(cache, n).steps), 1))


def drive(stream: ActionStream, g: PortGraph, start: int, limit: int) -> Iterator[tuple[RoundPlan, int]]:
    """Run a stream alone on ``g``; yields (plan, position after the round)."""
    v = start
    locale = Locale(g.degree(v))
    for _ in range(limit):
        plan = stream.next(locale)
        if plan is None:
            return
        if plan.port is not None:
            v, entry = g.adjacency[v][plan.port]
            locale = Locale(g.degree(v), entry)
        else:
            locale = Locale(g.degree(v))
        yield plan, v


def phase_length(label: int, cache: UxsCache, phase: int, cap: int | None = None) -> int:
    """Length in walk rounds of phase ``phase`` (1-based) of phi_walk."""
    m = min(2**phase, cap or cache.cap)
    return len(t1_transform(label)) * 2 * cache.length(m)
