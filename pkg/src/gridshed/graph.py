"""Centrality and connectivity on small undirected graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SimpleGraph:
    """Undirected graph on nodes ``0..n_nodes-1`` without loops or multi-edges."""

    n_nodes: int
    edges: list[tuple[int, int]]
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.edges = [(int(u), int(v)) for u, v in self.edges]
        if self.check:
            seen = set()
            for u, v in self.edges:
                if u == v:
                    raise ValueError(f"self-loop at node {u}")
                if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                    raise ValueError(f"edge ({u}, {v}) out of range")
                key = (min(u, v), max(u, v))
                if key in seen:
                    raise ValueError(f"duplicate edge {key}")
                seen.add(key)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Neighbour lists of ``(neighbour, edge_index)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for k, (u, v) in enumerate(self.edges):
            adj[u].append((v, k))
            adj[v].append((u, k))
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @classmethod
    def from_microgrid(cls, mg) -> "SimpleGraph":
        return cls(mg.n_buses, mg.edges)


def degree_centrality(g: SimpleGraph) -> np.ndarray:
    if g.n_nodes < 2:
        raise ValueError("degree centrality needs at least 2 nodes")
    return g.degrees() / (g.n_nodes - 1)


def edge_betweenness(g: SimpleGraph) -> np.ndarray:
    """Normalised edge betweenness via Brandes' accumulation.

    Counts, for every unordered node pair, the fraction of shortest paths
    through each edge, and divides by the number of pairs ``N(N-1)/2``.
    """
    n = g.n_nodes
    if n < 2:
        raise ValueError("edge betweenness needs at least 2 nodes")
    adj = g.adjacency()
    cb = np.zeros(len(g.edges))
    for s in range(n):
        stack = []
        preds: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w, k in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append((v, k))
        if len(stack) != n:
            raise ValueError("edge betweenness requires a connected graph")
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v, k in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + delta[w])
                cb[k] += c
                delta[v] += c
    # every unordered pair was counted from both endpoints
    return cb / 2.0 / (n * (n - 1) / 2.0)


def connected_components(g: SimpleGraph, removed_nodes=(), removed_edges=()) -> list[list[int]]:
    """Components of ``g`` after deleting nodes and edges, by BFS.

    ``removed_edges`` may hold edge indices or ``(u, v)`` pairs. Components
    are returned as sorted node lists, ordered by their smallest node.
    """
    dead_nodes = set(int(v) for v in removed_nodes)
    dead_edges = set()
    for e in removed_edges:
        if isinstance(e, (tuple, list)):
            dead_edges.add((min(e), max(e)))
        else:
            u, v = g.edges[int(e)]
            dead_edges.add((min(u, v), max(u, v)))

    adj: list[list[int]] = [[] for _ in range(g.n_nodes)]
    for u, v in g.edges:
        if u in dead_nodes or v in dead_nodes or (min(u, v), max(u, v)) in dead_edges:
            continue
        adj[u].append(v)
        adj[v].append(u)

    seen = np.zeros(g.n_nodes, dtype=bool)
    comps = []
    for start in range(g.n_nodes):
        if seen[start] or start in dead_nodes:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    return comps
