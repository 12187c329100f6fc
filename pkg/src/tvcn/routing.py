"""Shortest routes with bottleneck tie-breaking and the user-by-link matrix."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError, UnreachableError
from .graph import _canon


@dataclass(frozen=True)
class Route:
    """A simple path for one user.

    ``bottleneck_capacity`` is the minimum link capacity along the path and
    drives the routing tie-break. ``min_node_capacity`` is the minimum node
    forwarding capacity (the node degree) along the path and is the
    denominator of the transmission delay. ``prop_delay`` is the sum of the
    link propagation delays.
    """

    user: int
    nodes: tuple
    links: tuple
    hop_count: int
    bottleneck_capacity: float
    min_node_capacity: float
    prop_delay: float

    @staticmethod
    def from_nodes(user, node_seq, snapshot):
        node_seq = tuple(node_seq)
        if len(node_seq) < 2:
            raise ParameterError("a route needs at least two nodes")
        if len(set(node_seq)) != len(node_seq):
            raise ParameterError("route repeats a node")
        links = tuple(_canon(a, b) for a, b in zip(node_seq, node_seq[1:]))
        caps = [snapshot.capacity(*l) for l in links]
        return Route(
            user=user,
            nodes=node_seq,
            links=links,
            hop_count=len(links),
            bottleneck_capacity=float(min(caps)),
            min_node_capacity=float(min(snapshot.degree(n) for n in node_seq)),
            prop_delay=float(sum(snapshot.prop_delay(*l) for l in links)),
        )

    def to_json_dict(self):
        return {
            "user": self.user,
            "nodes": list(self.nodes),
            "links": [list(l) for l in self.links],
            "bottleneck": self.bottleneck_capacity,
        }


def shortest_route(snapshot, source, dest, user=0):
    """Minimum-hop route; ties broken by max bottleneck, then lexicographic.

    Deterministic for a given snapshot.
    """
    if source == dest:
        raise ParameterError("source and destination must differ")
    adjacency = snapshot.adjacency
    if source not in adjacency or dest not in adjacency:
        raise ParameterError("source or destination not in snapshot")

    dist = {source: 0}
    queue = deque([source])
    while queue:
        cur = queue.popleft()
        for nb in adjacency[cur]:
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    if dest not in dist:
        raise UnreachableError(f"no path from {source} to {dest}")

    # Layered DP over the BFS DAG: per node keep the best
    # (bottleneck, path) among minimum-hop paths from the source.
    best = {source: (float("inf"), (source,))}
    order = sorted(dist, key=lambda n: (dist[n], n))
    for node in order:
        if node == source:
            continue
        candidates = []
        for nb in adjacency[node]:
            if nb in best and dist.get(nb) == dist[node] - 1:
                bottleneck, path = best[nb]
                cap = snapshot.capacity(*_canon(nb, node))
                candidates.append((min(bottleneck, cap), path + (node,)))
        if candidates:
            best[node] = max(candidates, key=lambda c: (c[0], tuple(-n for n in c[1])))
    if dest not in best:
        raise UnreachableError(f"no path from {source} to {dest}")
    return Route.from_nodes(user, best[dest][1], snapshot)


def _lex_min(paths):
    return min(paths)


@dataclass(frozen=True)
class RoutingMatrix:
    """Dense 0/1 matrix with users as rows and snapshot links as columns."""

    matrix: np.ndarray
    links: tuple

    @property
    def link_index(self):
        return {l: i for i, l in enumerate(self.links)}

    def columns_for(self, link_set):
        index = self.link_index
        return [index[l] for l in sorted(link_set)]

    def submatrix(self, link_set):
        """Columns restricted to ``link_set`` (sorted), as float64."""
        cols = self.columns_for(link_set)
        return self.matrix[:, cols].astype(np.float64)


def build_routing_matrix(routes, snapshot):
    """0/1 incidence of route links over all snapshot links."""
    links = snapshot.links
    index = {l: i for i, l in enumerate(links)}
    matrix = np.zeros((len(routes), len(links)), dtype=np.int8)
    for r, route in enumerate(routes):
        for l in route.links:
            if l not in index:
                raise ConsistencyError(f"route {route.user} references stale link {l}")
            matrix[r, index[l]] = 1
    return RoutingMatrix(matrix=matrix, links=links)


def bottleneck_set(solution, snapshot, routing_matrix, tol=1e-6):
    """Links whose aggregate rate sits at capacity within relative ``tol``."""
    x = np.asarray(solution.x, dtype=np.float64)
    loads = routing_matrix.matrix.T.astype(np.float64) @ x
    congested = set()
    for i, link in enumerate(routing_matrix.links):
        cap = snapshot.capacity(*link)
        if abs(loads[i] - cap) <= tol * cap:
            congested.add(link)
    return congested


def routes_to_jsonl(routes):
    """One JSON object per route, one per line."""
    return "\n".join(json.dumps(r.to_json_dict()) for r in routes)
