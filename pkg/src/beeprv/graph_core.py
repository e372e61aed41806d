"""
Anonymous port-labeled graphs: representation, validation, canonical
families, exhaustive enumeration and a line-oriented text format.

A graph is stored positionally: ``adjacency[v][p]`` is the pair
``(u, q)`` reached by leaving ``v`` through port ``p``, where ``q`` is
the port of entry at ``u``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

NO_PORT = -1

ENUMERATION_CAP = 4

FAMILIES = ("k2", "ring", "path", "star", "double_star", "complete")


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class PortGraph:
    adjacency: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbor(self, v: int, p: int) -> tuple[int, int]:
        return neighbor(self, v, p)

    def edges(self) -> list[tuple[int, int]]:
        return sorted({(min(v, u), max(v, u))
                       for v, row in enumerate(self.adjacency) for u, _ in row})

    def __len__(self) -> int:
        return len(self.adjacency)

    def __str__(self) -> str:
        return serialize(self)


def make_graph(adjacency: Sequence[Sequence[Sequence[int]]]) -> PortGraph:
    """Build a graph from nested sequences; does not validate."""
    return PortGraph(tuple(tuple((int(u), int(q)) for u, q in row) for row in adjacency))


def neighbor(g: PortGraph, v: int, p: int) -> tuple[int, int]:
    if not 0 <= v < g.node_count:
        raise GraphError(f"no such node {v}")
    row = g.adjacency[v]
    if not 0 <= p < len(row):
        raise GraphError(f"no such port {p} at node {v}")
    return row[p]


def validate(g: PortGraph) -> list[str]:
    """Return a list of violated invariants; empty means valid."""
    problems: list[str] = []
    n = g.node_count
    if n < 1:
        return ["graph has no nodes"]
    for v, row in enumerate(g.adjacency):
        seen: set[int] = set()
        for p, (u, q) in enumerate(row):
            if not 0 <= u < n:
                problems.append(f"port ({v},{p}) leads to missing node {u}")
                continue
            if u == v:
                problems.append(f"self-loop at ({v},{p})")
            if u in seen:
                problems.append(f"parallel edge at ({v},{p}) to node {u}")
            seen.add(u)
            back = g.adjacency[u]
            if not 0 <= q < len(back) or back[q] != (v, p):
                problems.append(f"symmetry violated at ({v},{p})")
    if not problems and not _connected(g):
        problems.append("graph is not connected")
    return problems


def _connected(g: PortGraph) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u, _ in g.adjacency[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == g.node_count


def from_neighbor_lists(order: Sequence[Sequence[int]]) -> PortGraph:
    """``order[v][p]`` is the neighbour behind port ``p`` of ``v``; entry ports are derived."""
    rows = []
    for v, nbrs in enumerate(order):
        rows.append(tuple((u, list(order[u]).index(v)) for u in nbrs))
    return PortGraph(tuple(rows))


def _variant_orders(nbrs: list[list[int]], variant: int) -> list[list[int]]:
    # Mixed-radix decoding of the variant index into one permutation per node.
    orders = []
    for row in nbrs:
        perms = len(row)
        radix = 1
        for k in range(2, perms + 1):
            radix *= k
        index = variant % radix
        variant //= radix
        orders.append(_nth_permutation(row, index))
    return orders


def _nth_permutation(items: list[int], index: int) -> list[int]:
    pool = list(items)
    out = []
    for k in range(len(pool), 0, -1):
        fact = 1
        for j in range(2, k):
            fact *= j
        i, index = divmod(index, fact)
        out.append(pool.pop(i))
    return out


def generate_family(name: str, n: int, variant: int = 0) -> PortGraph:
    """Canonical member of a named family.

    ``variant`` re-numbers ports locally (0 is canonical). For ``double_star``
    the size parameter is the number of nodes in each star, so the graph has
    ``2n`` nodes.
    """
    if variant < 0:
        raise GraphError("variant must be non-negative")
    if name == "k2":
        if n != 2:
            raise GraphError("k2 has exactly 2 nodes")
        nbrs = [[1], [0]]
    elif name == "ring":
        if n < 3:
            raise GraphError("ring needs n >= 3")
        # port 0 clockwise, port 1 counter-clockwise
        nbrs = [[(v + 1) % n, (v - 1) % n] for v in range(n)]
    elif name == "path":
        if n < 2:
            raise GraphError("path needs n >= 2")
        nbrs = [[u for u in (v - 1, v + 1) if 0 <= u < n] for v in range(n)]
    elif name == "star":
        if n < 2:
            raise GraphError("star needs n >= 2")
        nbrs = [list(range(1, n))] + [[0] for _ in range(1, n)]
    elif name == "double_star":
        if n < 2:
            raise GraphError("double_star needs n >= 2")
        # centers 0 and n; the bridge is the last port of each center
        left = [list(range(1, n)) + [n]] + [[0] for _ in range(1, n)]
        right = [list(range(n + 1, 2 * n)) + [0]] + [[n] for _ in range(1, n)]
        nbrs = left + right
    elif name == "complete":
        if n < 2:
            raise GraphError("complete needs n >= 2")
        nbrs = [[u for u in range(n) if u != v] for v in range(n)]
    else:
        raise GraphError(f"unknown family {name!r}")
    return from_neighbor_lists(_variant_orders(nbrs, variant))


def family_variant_count(name: str, n: int) -> int:
    g = generate_family(name, n)
    total = 1
    for v in range(g.node_count):
        for k in range(2, g.degree(v) + 1):
            total *= k
    return total


def _connected_edge_sets(n: int) -> Iterator[list[tuple[int, int]]]:
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        adj = [[] for _ in range(n)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        if len(seen) == n:
            yield edges


def enumerate_port_graphs(m: int, cap: int = ENUMERATION_CAP) -> Iterator[PortGraph]:
    """Every connected simple graph on 1..m labeled nodes, under every local port numbering.

    Isomorphic copies are not merged. Order: node count, then edge-set bitmask,
    then port permutations in lexicographic order.
    """
    if m < 1:
        raise GraphError("m must be >= 1")
    if m > cap:
        raise GraphError(f"enumeration cap exceeded: m={m} > cap={cap}")
    for n in range(1, m + 1):
        for edges in _connected_edge_sets(n):
            nbrs = [sorted([b for a, b in edges if a == v] + [a for a, b in edges if b == v])
                    for v in range(n)]
            for orders in itertools.product(*(itertools.permutations(row) for row in nbrs)):
                yield from_neighbor_lists(orders)


def serialize(g: PortGraph) -> str:
    lines = [f"nodes {g.node_count}"]
    for v, row in enumerate(g.adjacency):
        body = " ".join(f"({u} {q})" for u, q in row)
        lines.append(f"{v}: {body}".rstrip())
    return "\n".join(lines) + "\n"


_PAIR = re.compile(r"\(\s*(-?\d+)\s+(-?\d+)\s*\)")
_ROW = re.compile(r"^(\d+):((?:\s*\(\s*-?\d+\s+-?\d+\s*\))*)\s*$")


def parse(text: str) -> PortGraph:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError(1, "empty graph text")
    first_no, first = lines[0]
    head = first.split()
    if len(head) != 2 or head[0] != "nodes" or not head[1].isdigit():
        raise ParseError(first_no, "expected 'nodes <m>'")
    n = int(head[1])
    rows: dict[int, tuple[tuple[int, int], ...]] = {}
    for line_no, line in lines[1:]:
        match = _ROW.match(line)
        if not match:
            raise ParseError(line_no, f"malformed node line {line!r}")
        v = int(match.group(1))
        if v >= n:
            raise ParseError(line_no, f"node {v} out of range")
        if v in rows:
            raise ParseError(line_no, f"node {v} listed twice")
        row = tuple((int(u), int(q)) for u, q in _PAIR.findall(match.group(2)))
        targets = [u for u, _ in row]
        if len(set(targets)) != len(targets):
            raise ParseError(line_no, f"duplicate port target at node {v}")
        rows[v] = row
    if len(rows) != n:
        missing = sorted(set(range(n)) - set(rows))
        raise ParseError(lines[-1][0], f"missing node lines for {missing}")
    g = PortGraph(tuple(rows[v] for v in range(n)))
    problems = validate(g)
    if problems:
        raise ParseError(first_no, "; ".join(problems))
    return g
