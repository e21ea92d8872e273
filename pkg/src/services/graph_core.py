from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components

from services.errors import InvalidInputError


def _normalize_edge(i: int, j: int, node_count: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise InvalidInputError(f"Self-loop ({i}, {j}) is not allowed")
    if not (0 <= i < node_count and 0 <= j < node_count):
        raise InvalidInputError(f"Edge ({i}, {j}) has an endpoint outside [0, {node_count})")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """
    Undirected graph on the dense node set 0..node_count-1.

    Edges are stored once as sorted pairs; adjacency lists are built at construction.
    Instances are immutable and safe to share between trials.
    """

    node_count: int
    edges: frozenset = frozenset()
    _adjacency: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.node_count, (int, np.integer)) or self.node_count < 1:
            raise InvalidInputError("node_count must be a positive integer")
        normalized = frozenset(_normalize_edge(i, j, self.node_count) for i, j in self.edges)
        adjacency = [[] for _ in range(self.node_count)]
        for i, j in sorted(normalized):
            adjacency[i].append(j)
            adjacency[j].append(i)
        object.__setattr__(self, "node_count", int(self.node_count))
        object.__setattr__(self, "edges", normalized)
        object.__setattr__(self, "_adjacency", tuple(tuple(sorted(a)) for a in adjacency))

    @classmethod
    def from_edge_list(cls, text: str, node_count: int) -> "Graph":
        """
        Parse the edge-list text format: one "i j" pair per line, 0-based, whitespace separated.
        Blank lines and lines starting with '#' are ignored.
        """
        edges = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InvalidInputError(f"line {line_no}: expected 'i j', got '{raw.strip()}'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise InvalidInputError(f"line {line_no}: node ids must be integers, got '{raw.strip()}'")
        return cls(node_count, frozenset(edges))

    def to_edge_list(self) -> str:
        return "".join(f"{i} {j}\n" for i, j in sorted(self.edges))

    def adjacency(self, i: int) -> tuple:
        return self._adjacency[i]

    def degree(self, i: int) -> int:
        return len(self._adjacency[i])

    def has_edge(self, i: int, j: int) -> bool:
        return ((i, j) if i < j else (j, i)) in self.edges


def union_graph(g0: Graph, g1: Graph) -> Graph:
    """Union of the edge sets of two graphs on the same node set."""
    if g0.node_count != g1.node_count:
        raise InvalidInputError(
            f"Cannot take the union of graphs with {g0.node_count} and {g1.node_count} nodes"
        )
    return Graph(g0.node_count, g0.edges | g1.edges)


def is_acyclic(g: Graph) -> bool:
    """True iff g is a forest (union-find over the edge list)."""
    parent = list(range(g.node_count))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in g.edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def neighbors(g: Graph, i: int) -> frozenset:
    if not 0 <= i < g.node_count:
        raise InvalidInputError(f"Node {i} is outside [0, {g.node_count})")
    return frozenset(g.adjacency(i))


def connected_components(g: Graph) -> np.ndarray:
    """Component label per node."""
    if g.edges:
        rows, cols = zip(*g.edges)
    else:
        rows, cols = (), ()
    adjacency = coo_matrix(
        (np.ones(len(rows)), (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))),
        shape=(g.node_count, g.node_count),
    )
    _, labels = _csgraph_components(adjacency, directed=False)
    return labels


def tree_path(g: Graph, source: int, target: int) -> list[int] | None:
    """Node sequence of a shortest path from source to target, or None when disconnected."""
    if source == target:
        return [source]
    previous = {source: None}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.adjacency(u):
            if v in previous:
                continue
            previous[v] = u
            if v == target:
                path = [v]
                while previous[path[-1]] is not None:
                    path.append(previous[path[-1]])
                return path[::-1]
            queue.append(v)
    return None


def evolve_observed_graph(g: Graph, observed: Iterable[int]) -> Graph:
    """
    Graph over the observed nodes adapted to what has been sampled so far.

    Two observed nodes are joined when they are adjacent in g or connected by a path whose
    interior nodes are all unobserved. Nodes outside `observed` are left isolated in the result.
    """
    observed = list(observed)
    observed_set = set(observed)
    for i in observed_set:
        if not 0 <= i < g.node_count:
            raise InvalidInputError(f"Observed node {i} is outside [0, {g.node_count})")

    edges = set()
    for source in observed_set:
        seen = {source}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in g.adjacency(u):
                if v in seen:
                    continue
                seen.add(v)
                if v in observed_set:
                    edges.add((source, v) if source < v else (v, source))
                else:
                    queue.append(v)
    return Graph(g.node_count, frozenset(edges))
