"""
Exhaustive scenario sweeps.

Running the round engine once per scenario is too slow for exhaustive
sweeps (graphs x start pairs x label pairs x delays), so sweeps use two
observations about the shipped protocols:

1. Until an agent first *reacts* to a beep it acts exactly as in its solo
   execution. Solo executions are recorded once per (graph, start, label)
   with the real program, and the first reacting round ``g*`` of every
   delay is found by vectorised scans over the two solo records.
2. From ``g*`` on, the run depends only on what both agents do in a short
   window around ``g*``. Scenarios whose windows coincide are resolved by a
   single full reference run (``simulator.run`` from round 0) of one of
   them; the reference run must end inside the window, otherwise every
   scenario of that window falls back to its own full reference run.

``cross_check`` compares this engine with plain reference runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph_core import NO_PORT, PortGraph
from .protocols import ProtocolConfig
from .simulator import AgentSpec, BeepModel, Observation, Scenario, run
from .walks import drive

log = logging.getLogger(__name__)

NEVER = np.iinfo(np.int64).max // 4

KINDS = ("success", "false_declaration", "timeout", "energy_exhausted")
KIND_CODE = {k: i for i, k in enumerate(KINDS)}

# Protocol -> (trigger rule, window length after g*, attribute holding the waiting tag)
RULES = {
    "rv_detect": ("first_here", 4, None),
    "bounded_rv": ("bounded", 3, "waiting"),
}


class SweepError(RuntimeError):
    pass


@dataclass
class SoloRecord:
    """Solo execution indexed by own round; index 0 is the activation position."""

    pos: np.ndarray
    beep: np.ndarray
    cum: np.ndarray       # moves made up to and including the round
    tag: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.pos) - 1


def record_solo(program, g: PortGraph, start: int, horizon: int, tag: str | None = None) -> SoloRecord:
    adjacency = g.adjacency
    v = start
    obs = Observation(True, len(adjacency[v]))
    pos = [start]
    beep = [False]
    cum = [0]
    tags = [False]
    moves = 0
    for _ in range(horizon):
        act = program.act(obs)
        if act.declare:
            raise SweepError("a solo agent declared rendezvous")
        entry = NO_PORT
        if act.port is not None:
            v, entry = adjacency[v][act.port]
            moves += 1
        pos.append(v)
        beep.append(act.beep)
        cum.append(moves)
        tags.append(bool(getattr(program, tag)) if tag else False)
        obs = Observation(False, len(adjacency[v]), entry)
    return SoloRecord(np.array(pos, dtype=np.int64), np.array(beep, dtype=bool),
                      np.array(cum, dtype=np.int64), np.array(tags, dtype=bool))


def _events(rec: SoloRecord) -> np.ndarray:
    return np.nonzero(rec.beep[1:])[0] + 1


class _Stack:
    """Solo records stacked row-wise; beep rounds padded with 0 (never a beep round)."""

    def __init__(self, records: Sequence[SoloRecord]):
        self.pos = np.stack([r.pos for r in records])
        self.beep = np.stack([r.beep for r in records])
        self.cum = np.stack([r.cum for r in records])
        self.tag = np.stack([r.tag for r in records])
        self.horizon = self.pos.shape[1] - 1
        events = [_events(r) for r in records]
        width = max(1, max(len(e) for e in events))
        self.events = np.zeros((len(records), width), dtype=np.int64)
        for i, e in enumerate(events):
            self.events[i, :len(e)] = e
        self.consecutive = np.zeros_like(self.events, dtype=bool)
        self.consecutive[:, 1:] = (self.events[:, 1:] == self.events[:, :-1] + 1) & (self.events[:, :-1] >= 1)
        self._padded: dict[int, tuple] = {}
        # window code of own round o at column o + 1; 0 marks an absent agent
        H = self.horizon
        self.code = np.zeros((self.pos.shape[0], H + 3), dtype=np.int64)
        self.code[:, 2:H + 2] = self.pos[:, 1:] * 8 + self.beep[:, 1:] * 4 + self.tag[:, 1:] * 2 + 1

    def padded(self, pad: int):
        """Forward and reversed copies where own round o sits at column pad + o and
        rounds outside 1..H read as an absent agent (position -1, beeping)."""
        if pad not in self._padded:
            rows, width = self.pos.shape[0], self.horizon + 1 + 2 * pad
            pos = np.full((rows, width), -1, dtype=np.int64)
            beep = np.ones((rows, width), dtype=bool)
            tag = np.zeros((rows, width), dtype=bool)
            pos[:, pad + 1:pad + self.horizon + 1] = self.pos[:, 1:]
            beep[:, pad + 1:pad + self.horizon + 1] = self.beep[:, 1:]
            tag[:, pad + 1:pad + self.horizon + 1] = self.tag[:, 1:]
            fwd = (pos, beep, tag)
            rev = tuple(np.ascontiguousarray(a[:, ::-1]) for a in fwd)
            self._padded[pad] = (fwd, rev)
        return self._padded[pad]


def _reactions(st: _Stack, listener: np.ndarray, beeper: np.ndarray, offset: np.ndarray,
               shift: np.ndarray, rule: str) -> np.ndarray:
    """Earliest global round in which ``listener`` reacts to ``beeper`` (NEVER if none).

    A beeper own round j is listener own round j + offset and global round j - 1 + shift.
    """
    H = st.horizon
    j = st.events[beeper]
    own = j + offset[:, None]
    valid = (j >= 1) & (own >= 1) & (own <= H)
    own = np.clip(own, 0, H)
    lrow = listener[:, None]
    heard = valid & (st.pos[lrow, own] == st.pos[beeper[:, None], j]) & ~st.beep[lrow, own]
    if rule == "bounded":
        prev = np.zeros_like(heard)
        prev[:, 1:] = heard[:, :-1] & st.consecutive[beeper, 1:]
        heard &= st.tag[lrow, own] | prev
    g = np.where(heard, j - 1 + shift[:, None], NEVER)
    return g.min(axis=1)


def _reactions_range(st: _Stack, listener: np.ndarray, beeper: np.ndarray, d0: int, D: int,
                     listener_is_first: bool, rule: str) -> np.ndarray:
    """``_reactions`` for the delays d0..d0+D-1 and one listener/beeper row per pair.

    Returns shape (pairs, D). With contiguous delays every (pair, beep) reads a
    contiguous slice of the listener record, gathered from a sliding-window view.
    """
    from numpy.lib.stride_tricks import sliding_window_view

    pad = d0 + D + 1
    fwd, rev = st.padded(pad)
    width = fwd[0].shape[1]
    j = st.events[beeper]                                  # (P, E)
    if listener_is_first:
        arrays, col = fwd, pad + j + d0                    # own = j + delay
        g = (j - 1 + d0)[:, :, None] + np.arange(D)[None, None, :]
    else:
        arrays, col = rev, width - 1 - pad - j + d0        # own = j - delay, read backwards
        g = np.broadcast_to((j - 1)[:, :, None], j.shape + (D,))
    lrow = listener[:, None]
    pos, beep, tag = (sliding_window_view(a, D, axis=1)[lrow, col] for a in arrays)
    other = np.where(j >= 1, st.pos[beeper[:, None], j], -2)
    heard = (pos == other[:, :, None]) & ~beep
    if rule == "bounded":
        prev = np.zeros_like(heard)
        prev[:, 1:] = heard[:, :-1] & st.consecutive[beeper, 1:, None]
        heard &= tag | prev
    return np.where(heard, g, NEVER).min(axis=1)


def first_trigger(a: SoloRecord, b: SoloRecord, delays: np.ndarray, rule: str) -> np.ndarray:
    """Global round of the first reaction; agent a starts at round 0, b at each delay."""
    st = _Stack([a, b])
    delays = np.asarray(delays, dtype=np.int64)
    zero = np.zeros(len(delays), dtype=np.int64)
    one = zero + 1
    return np.minimum(_reactions(st, zero, one, delays, delays, rule),
                      _reactions(st, one, zero, -delays, zero, rule))


def _codes(st: _Stack, row: np.ndarray, own: np.ndarray) -> np.ndarray:
    return st.code[row[:, None], np.clip(own, -1, st.horizon + 1) + 1]


_MIX = np.array([0x9E3779B97F4A7C15 * (2 * k + 1) % 2**64 for k in range(64)], dtype=np.uint64)


def _group(sig: np.ndarray):
    """Group equal rows: (first index per group, group id per row)."""
    with np.errstate(over="ignore"):
        h = (sig.astype(np.uint64) * _MIX[:sig.shape[1]]).sum(axis=1, dtype=np.uint64)
        h ^= h >> np.uint64(29)
    _, first, inverse = np.unique(h, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if not (sig == sig[first[inverse]]).all():
        _, first, inverse = np.unique(sig, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
    return first, inverse


@dataclass
class BatchResult:
    """Outcomes for every (label pair, delay) of one graph and start pair, flattened
    pair-major: entry k has labels ``pairs[k // len(delays)]`` and delay ``delays[k % len(delays)]``."""

    graph_id: int
    starts: tuple[int, int]
    pairs: list[tuple[int, int]]
    delays: np.ndarray
    kind: np.ndarray
    decl: np.ndarray
    node: np.ndarray
    moves: np.ndarray        # shape (S, 2)
    accelerated: np.ndarray  # False where a full reference run was used

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(np.array(self.pairs, dtype=np.int64), len(self.delays), axis=0)

    @property
    def delay(self) -> np.ndarray:
        return np.tile(self.delays, len(self.pairs))


@dataclass
class SweepStats:
    representatives: int = 0
    fallbacks: int = 0
    scenarios: int = 0


class FastSweep:
    """Sweep engine for one protocol configuration over a fixed list of graphs."""

    def __init__(self, config: ProtocolConfig, graphs: Sequence[PortGraph], model: BeepModel,
                 horizon: int, budget: int | None = None, round_limit: int | None = None,
                 chunk: int = 4_000_000):
        if config.protocol not in RULES:
            raise SweepError(f"no accelerated sweep for {config.protocol}")
        config.check_model(model)
        self.config = config
        self.graphs = list(graphs)
        self.model = model
        self.horizon = horizon
        self.budget = budget
        self.round_limit = round_limit
        self.chunk = chunk
        self.rule, self.window, self.tag = RULES[config.protocol]
        self.factory = config.factory()
        self._solo: dict[tuple[int, int, int], SoloRecord] = {}
        self._memo: dict[int, dict[bytes, tuple | None]] = {}
        self._stacks: dict[int, tuple] = {}
        self.stats = SweepStats()

    def solo(self, gid: int, start: int, label: int) -> SoloRecord:
        key = (gid, start, label)
        rec = self._solo.get(key)
        if rec is None:
            rec = record_solo(self.factory(label), self.graphs[gid], start, self.horizon, self.tag)
            self._solo[key] = rec
        return rec

    def drop_graph(self, gid: int) -> None:
        for key in [k for k in self._solo if k[0] == gid]:
            del self._solo[key]
        self._stacks.pop(gid, None)
        self._memo.pop(gid, None)

    def _stack(self, gid: int, labels: set[int]):
        """Solo records of every start of the graph with the given labels, stacked once per graph."""
        cached = self._stacks.get(gid)
        if cached is None or not labels <= cached[3]:
            labels = labels | (cached[3] if cached else set())
            keys = [(s, label) for s in range(self.graphs[gid].node_count) for label in sorted(labels)]
            st = _Stack([self.solo(gid, s, label) for s, label in keys])
            cached = (st, keys, {k: i for i, k in enumerate(keys)}, labels)
            self._stacks[gid] = cached
        return cached[:3]

    def scenario(self, gid: int, starts, labels, delay: int) -> Scenario:
        agents = (AgentSpec(int(labels[0]), int(starts[0]), 0, self.budget),
                  AgentSpec(int(labels[1]), int(starts[1]), int(delay), self.budget))
        limit = self.round_limit or self.config.default_round_limit(tuple(agents[i].label for i in (0, 1)), int(delay))
        return Scenario(self.graphs[gid], agents, self.model, limit)

    def reference(self, gid: int, starts, labels, delay: int):
        sc = self.scenario(gid, starts, labels, delay)
        trace, outcome = run(sc, self.factory, record=False)
        return outcome, trace

    def batch(self, gid: int, starts: tuple[int, int], pairs: Sequence[tuple[int, int]],
              delays: Sequence[int]) -> BatchResult:
        """All label pairs and delays for one graph and (ordered) start pair.

        The agent starting at ``starts[0]`` with the pair's first label is
        activated in round 0, the other in round ``delay``.
        """
        pairs = [tuple(p) for p in pairs]
        delays = np.asarray(delays, dtype=np.int64)
        size = self.graphs[gid].node_count
        if not all(0 <= s < size for s in starts):
            raise SweepError(f"start nodes {tuple(starts)} not in graph {gid} of size {size}")
        D = len(delays)
        S = len(pairs) * D
        out = BatchResult(gid, tuple(starts), pairs, delays,
                          np.full(S, -1, dtype=np.int64), np.full(S, -1, dtype=np.int64),
                          np.full(S, -1, dtype=np.int64), np.zeros((S, 2), dtype=np.int64),
                          np.ones(S, dtype=bool))
        if S == 0:
            return out
        st, keys, index = self._stack(gid, {label for p in pairs for label in p})
        row_a = np.repeat(np.array([index[(starts[0], p[0])] for p in pairs]), D)
        row_b = np.repeat(np.array([index[(starts[1], p[1])] for p in pairs]), D)
        delay = np.tile(delays, len(pairs))
        contiguous = D > 0 and bool((np.diff(delays) == 1).all())
        per_pair = max(1, self.chunk // max(1, st.events.shape[1] * D))
        for lo in range(0, len(pairs), per_pair):
            hi = min(len(pairs), lo + per_pair)
            sl = slice(lo * D, hi * D)
            ra, rb, dl = row_a[sl], row_b[sl], delay[sl]
            if contiguous:
                pa, pb = ra[::D], rb[::D]
                d0 = int(delays[0])
                gstar = np.minimum(_reactions_range(st, pa, pb, d0, D, True, self.rule),
                                   _reactions_range(st, pb, pa, d0, D, False, self.rule)).reshape(-1)
            else:
                gstar = np.minimum(_reactions(st, ra, rb, dl, dl, self.rule),
                                   _reactions(st, rb, ra, -dl, np.zeros_like(dl), self.rule))
            self._resolve_chunk(st, gid, starts, out, np.arange(sl.start, sl.stop), ra, rb, dl, gstar, keys)
        self.stats.scenarios += S
        return out

    def _resolve_chunk(self, st, gid, starts, out, where, row_a, row_b, delay, gstar, keys):
        W = self.window
        H = st.horizon
        found = gstar < NEVER
        g = np.where(found, gstar, 0)
        rel = np.arange(-1, W + 1)
        own_a = g[:, None] + 1 + rel[None, :]
        own_b = (g - delay)[:, None] + 1 + rel[None, :]
        in_reach = found & (own_a[:, -1] <= H) & (own_b[:, -1] <= H)
        base_a = st.cum[row_a, np.clip(g, 0, H)]                # moves before round g*
        base_b = st.cum[row_b, np.clip(g - delay, 0, H)]
        columns = [_codes(st, row_a, own_a), _codes(st, row_b, own_b)]
        if self.budget is not None:
            in_reach &= (base_a <= self.budget) & (base_b <= self.budget)
            cap = W + 2
            columns.append(np.clip(self.budget - base_a, 0, cap)[:, None])
            columns.append(np.clip(self.budget - base_b, 0, cap)[:, None])
        sig = np.concatenate(columns, axis=1)

        def labels_of(k):
            return keys[row_a[k]][1], keys[row_b[k]][1]

        idx = np.nonzero(in_reach)[0]
        fallback = list(np.nonzero(~in_reach)[0])
        if len(idx):
            first, inverse = _group(sig[idx])
            order = np.argsort(inverse, kind="stable")
            bounds = np.searchsorted(inverse[order], np.arange(len(first) + 1))
            for u in range(len(first)):
                k = idx[first[u]]
                key = sig[k].tobytes()
                memo = self._memo.setdefault(gid, {})
                if key not in memo:
                    memo[key] = self._resolve(gid, starts, labels_of(k), int(delay[k]), int(g[k]),
                                                    int(base_a[k]), int(base_b[k]))
                    self.stats.representatives += 1
                res = memo[key]
                members = idx[order[bounds[u]:bounds[u + 1]]]
                if res is None:
                    fallback.extend(members)
                    continue
                kcode, drel, dnode, ma, mb = res
                dst = where[members]
                out.kind[dst] = kcode
                out.decl[dst] = g[members] + drel
                out.node[dst] = dnode
                out.moves[dst, 0] = base_a[members] + ma
                out.moves[dst, 1] = base_b[members] + mb
        for k in sorted(fallback):
            outcome, trace = self.reference(gid, starts, labels_of(k), int(delay[k]))
            dst = where[k]
            out.kind[dst] = KIND_CODE[outcome.kind]
            out.decl[dst] = outcome.round if outcome.round is not None else -1
            out.node[dst] = outcome.node if outcome.node is not None else -1
            out.moves[dst] = trace.moves
            out.accelerated[dst] = False
            self.stats.fallbacks += 1

    def _resolve(self, gid, starts, labels, delay, gstar, base_a, base_b):
        outcome, trace = self.reference(gid, starts, labels, delay)
        if outcome.round is None or not gstar <= outcome.round <= gstar + self.window:
            return None
        if outcome.kind == "timeout":
            return None
        node = outcome.node if outcome.node is not None else -1
        return (KIND_CODE[outcome.kind], outcome.round - gstar, node,
                trace.moves[0] - base_a, trace.moves[1] - base_b)


def cross_check(engine: FastSweep, gid: int, starts, pairs, delays) -> list[str]:
    """Compare the engine with a full reference run for every scenario; returns mismatches."""
    res = engine.batch(gid, starts, pairs, delays)
    problems = []
    for k, (labels, d) in enumerate(zip(res.labels, res.delay)):
        outcome, trace = engine.reference(gid, starts, labels, int(d))
        got = (KINDS[res.kind[k]], int(res.decl[k]), int(res.node[k]), tuple(int(x) for x in res.moves[k]))
        want = (outcome.kind, outcome.round if outcome.round is not None else -1,
                outcome.node if outcome.node is not None else -1, tuple(trace.moves))
        if got != want:
            problems.append(f"graph {gid} starts {tuple(starts)} labels {tuple(int(x) for x in labels)} "
                            f"delay {d}: engine {got} != reference {want}")
    return problems


# --- Walk-level meeting sweep ---------------------------------------------

@dataclass
class WalkRecord:
    pos: np.ndarray      # own round r -> position after round r; index 0 = start
    active: np.ndarray   # own round r -> walk intends to move


def record_walk(stream, g: PortGraph, start: int, horizon: int) -> WalkRecord:
    pos = [start]
    active = [False]
    for plan, v in drive(stream, g, start, horizon):
        pos.append(v)
        active.append(plan.active)
    if len(pos) <= horizon:
        raise SweepError("walk stream ended early")
    return WalkRecord(np.array(pos, dtype=np.int64), np.array(active, dtype=bool))


def idle_record(start: int, horizon: int) -> WalkRecord:
    return WalkRecord(np.full(horizon + 1, start, dtype=np.int64), np.zeros(horizon + 1, dtype=bool))


def first_asymmetric_meeting(a: WalkRecord, b: WalkRecord, delays: np.ndarray,
                             chunk: int = 256) -> np.ndarray:
    """Per delay: rounds after the later activation (inclusive count) until the agents
    share a node in a round active for exactly one of them; -1 if none within the horizon.

    Agent a is activated at round 0 and b at round delay.
    """
    H = min(a.pos.shape[0], b.pos.shape[0]) - 1
    out = np.full(len(delays), -1, dtype=np.int64)
    pending = np.ones(len(delays), dtype=bool)
    t0 = 1
    while t0 <= H and pending.any():
        t = np.arange(t0, min(t0 + chunk, H + 1))          # b own round
        rows = np.nonzero(pending)[0]
        own_a = t[None, :] + delays[rows, None]
        ok = own_a <= a.pos.shape[0] - 1
        own_a_c = np.minimum(own_a, a.pos.shape[0] - 1)
        hit = ok & (a.pos[own_a_c] == b.pos[t][None, :]) & (a.active[own_a_c] != b.active[t][None, :])
        any_hit = hit.any(axis=1)
        first = hit.argmax(axis=1)
        found = rows[any_hit]
        out[found] = t[first[any_hit]]
        pending[found] = False
        t0 += chunk
    return out
