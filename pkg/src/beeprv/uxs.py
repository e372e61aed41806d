"""
Universal exploration sequences: the step rule, exhaustive certification,
a deterministic miner, and the on-disk cache of certified records.

The exploration length R(m) used everywhere else is the length of the
mined record for size bound m.

Two coverage notions are kept. A "visit" record makes the walk see every
node, its start included. An "arrival" record makes the walk *enter* every
node by a move, so an explorer that beeps on arrival is heard at every node,
including the one it started from.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph_core import (
    ENUMERATION_CAP,
    FAMILIES,
    NO_PORT,
    GraphError,
    PortGraph,
    enumerate_port_graphs,
    family_variant_count,
    generate_family,
)

log = logging.getLogger(__name__)

DEFAULT_CACHE = Path(__file__).with_name("data") / "uxs_cache.txt"

# Family-scoped records cover these variants of every family member up to the bound.
FAMILY_VARIANTS = 8


class UxsError(RuntimeError):
    pass


@dataclass(frozen=True)
class UxsRecord:
    size_bound: int
    steps: tuple[int, ...]
    certified: bool = False
    # "all": every port-labeled graph up to size_bound; "families": the
    # canonical family spot-check set (see family_graphs)
    scope: str = "all"
    coverage: str = "visit"   # "visit" | "arrival"

    @property
    def length(self) -> int:
        return len(self.steps)

    def covers(self, g: PortGraph) -> bool:
        """True if this certificate's scope includes ``g``."""
        if g.node_count > self.size_bound:
            return False
        if self.scope == "all":
            return True
        skip = 1 if self.coverage == "arrival" else 0
        return all(set(exp_walk(g, s, self, check=False)[skip:]) == set(range(g.node_count))
                   for s in range(g.node_count))


def exp_step(prev_entry_port: int, degree: int, x: int) -> int:
    """Exit port for one exploration step; NO_PORT on an isolated node."""
    if degree == 0:
        return NO_PORT
    if prev_entry_port == NO_PORT:
        return 0
    return (prev_entry_port + x) % degree


def exp_walk(g: PortGraph, start: int, record: UxsRecord, check: bool = True) -> list[int]:
    """Trajectory of EXP from ``start``: R+1 nodes, beginning with ``start``."""
    if check:
        if not record.certified:
            raise UxsError(f"refusing uncertified UXS record for m={record.size_bound}")
        if g.node_count > record.size_bound:
            raise UxsError(f"graph of size {g.node_count} exceeds UXS bound {record.size_bound}")
    v = start
    entry = NO_PORT
    path = [v]
    for x in record.steps:
        port = exp_step(entry, g.degree(v), x)
        if port != NO_PORT:
            v, entry = g.adjacency[v][port]
        path.append(v)
    return path


class _WalkTable:
    """All (graph, start) pairs of a graph set, packed for vectorised stepping."""

    def __init__(self, graphs: Iterable[PortGraph]):
        max_deg = 1
        rows = []
        offsets = []
        sizes = []
        base = 0
        for g in graphs:
            offsets.append(base)
            sizes.append(g.node_count)
            for v in range(g.node_count):
                rows.append([(base + u, q) for u, q in g.adjacency[v]])
                max_deg = max(max_deg, len(g.adjacency[v]))
            base += g.node_count
        self.max_degree = max_deg
        self.next_node = np.zeros((base, max_deg), dtype=np.int64)
        self.entry = np.zeros((base, max_deg), dtype=np.int64)
        self.degree = np.zeros(base, dtype=np.int64)
        for i, row in enumerate(rows):
            self.degree[i] = len(row)
            for p, (u, q) in enumerate(row):
                self.next_node[i, p] = u
                self.entry[i, p] = q
            if not row:
                self.next_node[i, 0] = i
                self.entry[i, 0] = NO_PORT
        start_off = []
        start_loc = []
        start_n = []
        for off, n in zip(offsets, sizes):
            for s in range(n):
                start_off.append(off)
                start_loc.append(s)
                start_n.append(n)
        self.offset = np.array(start_off, dtype=np.int64)
        self.local = np.array(start_loc, dtype=np.int64)
        self.full = (np.int64(1) << np.array(start_n, dtype=np.int64)) - 1

    def initial(self, arrival: bool = False):
        cur = self.offset + self.local
        entry = np.full(len(cur), NO_PORT, dtype=np.int64)
        visited = np.zeros(len(cur), dtype=np.int64) if arrival else np.int64(1) << self.local
        return cur, entry, visited

    def step(self, state, x: int):
        cur, entry, visited = state
        deg = self.degree[cur]
        safe = np.maximum(deg, 1)
        port = np.where(entry == NO_PORT, 0, (entry + x) % safe)
        nxt = self.next_node[cur, port]
        ent = np.where(deg == 0, NO_PORT, self.entry[cur, port])
        return nxt, ent, visited | (np.int64(1) << (nxt - self.offset))

    def score(self, state) -> tuple[int, int]:
        missing = self.full & ~state[2]
        pending = missing[missing != 0]
        nodes = sum(bin(int(b)).count("1") for b in pending)
        return len(pending), nodes


def _verify_on(graphs: Iterable[PortGraph], steps: Sequence[int], arrival: bool = False) -> bool:
    table = _WalkTable(graphs)
    state = table.initial(arrival)
    for x in steps:
        state = table.step(state, int(x))
    return table.score(state)[0] == 0


def verify_uxs(steps: Sequence[int], m: int, cap: int = ENUMERATION_CAP, arrival: bool = False) -> bool:
    """Exhaustive certificate: every graph of size <= m, every start, all nodes visited
    (with ``arrival``: all nodes entered by a move)."""
    return _verify_on(enumerate_port_graphs(m, cap), steps, arrival)


def family_graphs(m: int) -> list[PortGraph]:
    """The family spot-check set for bound ``m``: every family member with at most
    ``m`` nodes, first FAMILY_VARIANTS port numberings each."""
    out = []
    for name in FAMILIES:
        for n in range(2, m + 1):
            try:
                count = family_variant_count(name, n)
            except GraphError:
                continue
            g0 = generate_family(name, n)
            if g0.node_count > m:
                continue
            for variant in range(min(count, FAMILY_VARIANTS)):
                out.append(generate_family(name, n, variant))
    return out


def mine_uxs(m: int, cap: int = ENUMERATION_CAP, max_length: int = 4096,
             max_depth: int = 4, scope: str = "all", coverage: str = "visit") -> UxsRecord:
    """Deterministic miner.

    Grows the sequence by the shortest extension (iterative deepening up to
    ``max_depth``) that strictly lowers (uncovered pairs, missing nodes);
    ties go to the lexicographically smallest extension.
    """
    if m < 1:
        raise UxsError("m must be >= 1")
    if scope == "all":
        graphs = list(enumerate_port_graphs(m, cap))
    elif scope == "families":
        graphs = family_graphs(m)
    else:
        raise UxsError(f"unknown scope {scope!r}")
    if coverage not in ("visit", "arrival"):
        raise UxsError(f"unknown coverage {coverage!r}")
    arrival = coverage == "arrival"
    if not arrival:
        graphs = [g for g in graphs if g.node_count > 1]
    if not graphs:
        return UxsRecord(m, (), certified=True, scope=scope, coverage=coverage)
    table = _WalkTable(graphs)
    # x only matters modulo each degree present
    modulus = 1
    for d in range(1, table.max_degree + 1):
        modulus = modulus * d // math.gcd(modulus, d)
    steps = [0]
    state = table.step(table.initial(arrival), 0)
    score = table.score(state)
    while score[0] > 0:
        best = None
        for depth in range(1, max_depth + 1):
            for ext in itertools.product(range(modulus), repeat=depth):
                trial = state
                for x in ext:
                    trial = table.step(trial, x)
                s = table.score(trial)
                if best is None or s < best[0]:
                    best = (s, ext, trial)
            if best[0] < score:
                break
        if best is None or not best[0] < score:
            raise UxsError(f"search budget exhausted: no improving extension within max_depth={max_depth}")
        score, ext, state = best
        steps.extend(ext)
        if len(steps) > max_length:
            raise UxsError(f"search budget exhausted: max_length={max_length}")
    if not _verify_on(graphs, steps, arrival):
        raise UxsError("mined sequence failed its own certificate")
    log.info("mined UXS m=%d scope=%s coverage=%s R=%d", m, scope, coverage, len(steps))
    return UxsRecord(m, tuple(steps), certified=True, scope=scope, coverage=coverage)


def certify(record: UxsRecord, cap: int = ENUMERATION_CAP) -> UxsRecord:
    arrival = record.coverage == "arrival"
    if record.scope == "all":
        ok = verify_uxs(record.steps, record.size_bound, cap, arrival)
    else:
        ok = _verify_on(family_graphs(record.size_bound), record.steps, arrival)
    if not ok:
        raise UxsError(f"UXS record for m={record.size_bound} ({record.scope}, {record.coverage}) "
                       "failed certification")
    return dataclasses.replace(record, certified=True)


_TAGS = {("all", "visit"): "uxs", ("families", "visit"): "uxs-families",
         ("all", "arrival"): "uxs-arrival", ("families", "arrival"): "uxs-arrival-families"}
_KINDS = {tag: kind for kind, tag in _TAGS.items()}


def format_record(record: UxsRecord) -> str:
    tag = _TAGS[record.scope, record.coverage]
    body = " ".join(str(x) for x in record.steps)
    return f"{tag} {record.size_bound} {record.length} : {body}".rstrip()


def parse_record(line: str) -> UxsRecord:
    head, _, body = line.partition(":")
    parts = head.split()
    if len(parts) != 3 or parts[0] not in _KINDS:
        raise UxsError(f"malformed UXS line {line!r}")
    try:
        m, length = int(parts[1]), int(parts[2])
        steps = tuple(int(x) for x in body.split())
    except ValueError:
        raise UxsError(f"malformed UXS line {line!r}")
    if len(steps) != length:
        raise UxsError(f"UXS line for m={m} declares length {length} but has {len(steps)} steps")
    scope, coverage = _KINDS[parts[0]]
    return UxsRecord(m, steps, certified=False, scope=scope, coverage=coverage)


@dataclass
class UxsCache:
    """Records keyed by (size bound, coverage). Records read from disk are
    re-certified on first use."""

    path: Path | None = None
    records: dict[tuple[int, str], UxsRecord] = field(default_factory=dict)
    cap: int = ENUMERATION_CAP

    @classmethod
    def load(cls, path: str | Path | None = None, cap: int = ENUMERATION_CAP) -> "UxsCache":
        path = Path(path) if path is not None else DEFAULT_CACHE
        cache = cls(path=path, cap=cap)
        if path.exists():
            for line in path.read_text().splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    rec = parse_record(line)
                    cache.records[rec.size_bound, rec.coverage] = rec
        return cache

    def get(self, m: int, coverage: str = "visit") -> UxsRecord:
        rec = self.records.get((m, coverage))
        if rec is None:
            flag = " --coverage arrival" if coverage == "arrival" else ""
            raise UxsError(f"no {coverage} UXS record for m={m}; run mine-uxs {m}{flag}")
        if not rec.certified:
            rec = certify(rec, self.cap)
            self.records[m, coverage] = rec
        return rec

    def length(self, m: int, coverage: str = "visit") -> int:
        return self.get(m, coverage).length

    def certify_all(self) -> None:
        for key in sorted(self.records):
            self.get(*key)

    def add(self, record: UxsRecord) -> None:
        self.records[record.size_bound, record.coverage] = record

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else self.path or DEFAULT_CACHE
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [format_record(self.records[key]) for key in sorted(self.records)]
        path.write_text("\n".join(lines) + "\n")
        return path
