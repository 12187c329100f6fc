"""Evolving network snapshots: growth, preferential rewiring and link removal.

A snapshot is an undirected simple graph with a propagation delay per link.
Link capacity is always the product of the endpoint degrees at the snapshot's
current degrees, so it is derived, never stored. Evolution adds one node per
step and spends a fixed per-step link budget on new links, rewirings and
deletions; the graph stays connected throughout.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvolutionStalledError,
    InsufficientDataError,
    ParameterError,
    SelectionError,
    UnknownLinkError,
)

PROP_DELAY_RANGE = (0.1, 1.0)

_REWIRE_RETRIES = 10
_DELETE_RETRIES = 10


def _canon(u, v):
    return (u, v) if u <= v else (v, u)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class NetworkSnapshot:
    """Immutable view of the network at one time step.

    ``adjacency`` maps node id to a frozenset of neighbours and ``delays``
    maps canonical ``(u, v)`` pairs (``u < v``) to propagation delays.
    Treat instances as values: evolution returns new snapshots.
    """

    time_index: int
    adjacency: dict
    delays: dict

    @staticmethod
    def from_links(time_index, nodes, links):
        """Build a snapshot from an iterable of ``(u, v, prop_delay)`` triples."""
        adjacency = {int(n): set() for n in nodes}
        delays = {}
        for u, v, d in links:
            u, v = int(u), int(v)
            if u == v:
                raise ParameterError(f"self-loop on node {u}")
            key = _canon(u, v)
            if key in delays:
                raise ParameterError(f"duplicate link {key}")
            if not d > 0:
                raise ParameterError(f"propagation delay of {key} must be positive")
            if u not in adjacency or v not in adjacency:
                raise ParameterError(f"link {key} references an unknown node")
            adjacency[u].add(v)
            adjacency[v].add(u)
            delays[key] = float(d)
        frozen = {n: frozenset(nb) for n, nb in adjacency.items()}
        return NetworkSnapshot(int(time_index), frozen, delays)

    @property
    def nodes(self):
        return frozenset(self.adjacency)

    @property
    def n_nodes(self):
        return len(self.adjacency)

    @property
    def links(self):
        return tuple(sorted(self.delays))

    @property
    def n_links(self):
        return len(self.delays)

    def degree(self, node):
        return len(self.adjacency[node])

    def degrees(self):
        return {n: len(nb) for n, nb in self.adjacency.items()}

    def neighbors(self, node):
        return self.adjacency[node]

    def has_link(self, u, v):
        return _canon(u, v) in self.delays

    def prop_delay(self, u, v):
        key = _canon(u, v)
        if key not in self.delays:
            raise UnknownLinkError(f"no link {key}")
        return self.delays[key]

    def capacity(self, u, v):
        """Link capacity: product of the endpoint degrees."""
        key = _canon(u, v)
        if key not in self.delays:
            raise UnknownLinkError(f"no link {key}")
        return len(self.adjacency[key[0]]) * len(self.adjacency[key[1]])

    def link_capacities(self):
        return {key: self.capacity(*key) for key in self.delays}

    def is_connected(self):
        if not self.adjacency:
            return False
        start = next(iter(self.adjacency))
        seen = {start}
        queue = deque([start])
        while queue:
            for nb in self.adjacency[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return len(seen) == len(self.adjacency)

    def to_json_dict(self):
        return {
            "time_index": self.time_index,
            "nodes": sorted(self.adjacency),
            "links": [
                {"u": u, "v": v, "prop_delay": self.delays[(u, v)]}
                for (u, v) in sorted(self.delays)
            ],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)

    @staticmethod
    def from_json_dict(data):
        return NetworkSnapshot.from_links(
            data["time_index"],
            data["nodes"],
            [(l["u"], l["v"], l["prop_delay"]) for l in data["links"]],
        )

    @staticmethod
    def from_json(text):
        return NetworkSnapshot.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class EvolutionParams:
    """Per-step evolution budget and fractions."""

    n0: int
    M: int
    beta: float
    gamma: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.n0 < 3:
            raise ParameterError("n0 must be at least 3")
        if not (0.0 < self.beta < 1.0):
            raise ParameterError("beta must lie in (0, 1)")
        if not (0.5 < self.gamma <= 1.0):
            raise ParameterError("gamma must lie in (0.5, 1]")
        if not (1 <= self.M <= self.n0):
            raise ParameterError("M must satisfy 1 <= M <= n0")

    def split(self):
        """Per-step counts ``(f_add, f_rewire, f_delete)``; they sum to M."""
        f_add = max(1, _round_half_up(self.beta * self.M))
        f_rewire = _round_half_up(self.gamma * (self.M - f_add))
        f_delete = self.M - f_add - f_rewire
        return f_add, f_rewire, f_delete


@dataclass
class EvolutionLog:
    """Realized link changes of one evolution step."""

    step: int
    added: tuple = ()
    rewired: tuple = ()  # (pivot, old_far, new_far) triples
    deleted: tuple = ()
    aborted_rewires: int = 0
    aborted_deletions: int = 0

    @property
    def total(self):
        return (
            len(self.added)
            + len(self.rewired)
            + len(self.deleted)
            + self.aborted_rewires
            + self.aborted_deletions
        )


def new_seed_network(n0, topology="complete", rng=None):
    """Connected seed graph on ``n0`` nodes with fresh propagation delays."""
    if n0 < 3:
        raise ParameterError("n0 must be at least 3")
    if rng is None:
        rng = np.random.default_rng(0)
    links = []
    if topology == "complete":
        for u in range(n0):
            for v in range(u + 1, n0):
                links.append((u, v, rng.uniform(*PROP_DELAY_RANGE)))
    elif topology == "ring":
        for u in range(n0):
            links.append(tuple(sorted((u, (u + 1) % n0))) + (rng.uniform(*PROP_DELAY_RANGE),))
    else:
        raise ParameterError(f"unknown seed topology {topology!r}")
    return NetworkSnapshot.from_links(0, range(n0), links)


class _Evolver:
    """Mutable working graph used to run many evolution steps efficiently.

    Node ids are contiguous integers: the seed occupies 0..n0-1 and each
    step appends one id.
    """

    def __init__(self, snapshot):
        n = snapshot.n_nodes
        if sorted(snapshot.adjacency) != list(range(n)):
            raise ParameterError("evolution requires contiguous integer node ids")
        self.n = n
        cap = max(16, 2 * n)
        self.deg = np.zeros(cap, dtype=np.float64)
        self.adj = [set(snapshot.adjacency[i]) for i in range(n)]
        for i in range(n):
            self.deg[i] = len(self.adj[i])
        self.delays = dict(snapshot.delays)

    def _grow(self):
        if self.n >= self.deg.shape[0]:
            new = np.zeros(2 * self.deg.shape[0], dtype=np.float64)
            new[: self.deg.shape[0]] = self.deg
            self.deg = new

    def _draw(self, rng, weights):
        total = float(weights.sum())
        if total <= 0.0:
            raise SelectionError("all candidate weights are zero")
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(weights), r, side="right"))
        return min(idx, weights.shape[0] - 1)

    def pref_draw(self, rng, exclude=(), base=None):
        weights = (self.deg[: self.n] if base is None else base).copy()
        for e in exclude:
            weights[e] = 0.0
        return self._draw(rng, weights)

    def anti_draw(self, rng, candidates):
        if len(candidates) < 2:
            raise SelectionError("anti-preferential draw needs at least 2 candidates")
        cand = np.asarray(sorted(candidates), dtype=np.int64)
        degsum = float(self.deg[cand].sum())
        if degsum <= 0.0:
            raise SelectionError("candidate degrees sum to zero")
        weights = 1.0 - self.deg[cand] / degsum
        return int(cand[self._draw(rng, weights)])

    def add_link(self, u, v, delay):
        self.adj[u].add(v)
        self.adj[v].add(u)
        self.deg[u] += 1
        self.deg[v] += 1
        self.delays[_canon(u, v)] = delay

    def remove_link(self, u, v):
        self.adj[u].discard(v)
        self.adj[v].discard(u)
        self.deg[u] -= 1
        self.deg[v] -= 1
        del self.delays[_canon(u, v)]

    def connected_without(self, u, v):
        """Would the graph stay connected if link (u, v) were removed?"""
        if self.adj[u] & self.adj[v]:
            return True
        seen = {v}
        queue = deque([v])
        while queue:
            cur = queue.popleft()
            for nb in self.adj[cur]:
                if cur == v and nb == u:
                    continue  # the link under test
                if nb == u:
                    return True
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        return False

    def step(self, params, rng, step_index):
        f_add, f_rewire, f_delete = params.split()
        f_add = min(f_add, self.n)

        new = self.n
        self.n += 1
        self._grow()
        self.adj.append(set())

        # Growth: targets drawn against start-of-step degrees, distinct.
        base = self.deg[: self.n].copy()
        added = []
        chosen = [new]
        for _ in range(f_add):
            t = self.pref_draw(rng, exclude=chosen, base=base)
            chosen.append(t)
            self.add_link(new, t, rng.uniform(*PROP_DELAY_RANGE))
            added.append(_canon(new, t))

        rewired = []
        aborted_rw = 0
        for _ in range(f_rewire):
            done = False
            for _attempt in range(_REWIRE_RETRIES):
                pivot = self.pref_draw(rng)
                if len(self.adj[pivot]) < 2 or len(self.adj[pivot]) >= self.n - 1:
                    continue
                far = self.anti_draw(rng, self.adj[pivot])
                exclude = [pivot] + list(self.adj[pivot])
                try:
                    target = self.pref_draw(rng, exclude=exclude)
                except SelectionError:
                    continue
                self.add_link(pivot, target, rng.uniform(*PROP_DELAY_RANGE))
                if self.connected_without(pivot, far):
                    self.remove_link(pivot, far)
                    rewired.append((pivot, far, target))
                    done = True
                    break
                self.remove_link(pivot, target)
            if not done:
                aborted_rw += 1

        deleted = []
        aborted_del = 0
        for _ in range(f_delete):
            done = False
            for _attempt in range(_DELETE_RETRIES):
                node = self.anti_draw(rng, range(self.n))
                if not self.adj[node]:
                    continue
                u, v = min(
                    (_canon(node, nb) for nb in self.adj[node]),
                    key=lambda key: (self.deg[key[0]] * self.deg[key[1]], key),
                )
                if self.connected_without(u, v):
                    self.remove_link(u, v)
                    deleted.append((u, v))
                    done = True
                    break
            if not done:
                aborted_del += 1

        return EvolutionLog(
            step=step_index,
            added=tuple(added),
            rewired=tuple(rewired),
            deleted=tuple(deleted),
            aborted_rewires=aborted_rw,
            aborted_deletions=aborted_del,
        )

    def to_snapshot(self, time_index):
        adjacency = {i: frozenset(self.adj[i]) for i in range(self.n)}
        return NetworkSnapshot(time_index, adjacency, dict(self.delays))


def preferential_select(snapshot, rng, exclude=frozenset()):
    """Draw a node with probability proportional to its degree.

    Nodes in ``exclude`` are never returned; probabilities renormalize over
    the remaining candidates.
    """
    nodes = sorted(snapshot.adjacency)
    weights = np.array(
        [0.0 if n in exclude else float(snapshot.degree(n)) for n in nodes]
    )
    total = weights.sum()
    if total <= 0.0:
        raise SelectionError("no candidate with positive degree")
    r = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(weights), r, side="right"))
    return nodes[min(idx, len(nodes) - 1)]


def anti_preferential_select(snapshot, rng, exclude=frozenset(), candidates=None):
    """Draw a node with probability proportional to one minus its degree share.

    The degree share is taken over the candidate set (all non-excluded nodes
    unless ``candidates`` is given).
    """
    if candidates is None:
        candidates = [n for n in sorted(snapshot.adjacency) if n not in exclude]
    else:
        candidates = [n for n in sorted(candidates) if n not in exclude]
    if len(candidates) < 2:
        raise SelectionError("anti-preferential selection needs at least 2 candidates")
    deg = np.array([float(snapshot.degree(n)) for n in candidates])
    degsum = deg.sum()
    if degsum <= 0.0:
        raise SelectionError("candidate degrees sum to zero")
    weights = 1.0 - deg / degsum
    total = weights.sum()
    r = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(weights), r, side="right"))
    return candidates[min(idx, len(candidates) - 1)]


def preferential_probabilities(snapshot, exclude=frozenset()):
    """Exact selection probabilities used by :func:`preferential_select`."""
    candidates = [n for n in sorted(snapshot.adjacency) if n not in exclude]
    deg = np.array([float(snapshot.degree(n)) for n in candidates])
    return dict(zip(candidates, deg / deg.sum()))


def anti_preferential_probabilities(snapshot, exclude=frozenset(), candidates=None):
    """Exact selection probabilities used by :func:`anti_preferential_select`."""
    if candidates is None:
        candidates = [n for n in sorted(snapshot.adjacency) if n not in exclude]
    deg = np.array([float(snapshot.degree(n)) for n in candidates])
    weights = 1.0 - deg / deg.sum()
    return dict(zip(candidates, weights / weights.sum()))


def evolve(snapshot, params, rng, steps, keep_logs=False):
    """Run ``steps`` evolution steps and return the final snapshot.

    Returns ``(snapshot, logs)``; ``logs`` is empty unless ``keep_logs``.
    """
    if steps < 0:
        raise ParameterError("steps must be non-negative")
    if not snapshot.is_connected():
        raise EvolutionStalledError("evolution requires a connected snapshot")
    ev = _Evolver(snapshot)
    logs = []
    t = snapshot.time_index
    for k in range(steps):
        log = ev.step(params, rng, t + k + 1)
        if keep_logs:
            logs.append(log)
    return ev.to_snapshot(t + steps), logs


def evolve_step(snapshot, params, rng):
    """One evolution step; the input snapshot is left untouched."""
    out, logs = evolve(snapshot, params, rng, 1, keep_logs=True)
    return out, logs[0]


def link_capacity(snapshot, link):
    """Capacity of one link: product of current endpoint degrees."""
    u, v = link
    return snapshot.capacity(u, v)


def power_law_mle(values, k_min):
    """Continuous maximum-likelihood tail exponent with half-integer shift.

    ``alpha = 1 + n / sum(ln(k_i / (k_min - 0.5)))`` over values >= k_min.
    """
    if k_min < 1:
        raise ParameterError("k_min must be at least 1")
    values = np.asarray(values, dtype=np.float64)
    tail = values[values >= k_min]
    if tail.shape[0] < 50:
        raise InsufficientDataError(
            f"only {tail.shape[0]} observations >= {k_min}; need at least 50"
        )
    if np.unique(tail).shape[0] < 2:
        raise InsufficientDataError("degenerate tail: all observations identical")
    return 1.0 + tail.shape[0] / float(np.sum(np.log(tail / (k_min - 0.5))))


def fit_power_law_exponent(snapshot, k_min):
    """Tail exponent estimate of the snapshot's degree distribution."""
    return power_law_mle(list(snapshot.degrees().values()), k_min)
