"""Undirected sensor graphs and the shortest-path delay matrix.

Sensors are labelled ``0 .. K-1``. Every public constructor rejects
disconnected graphs, since all detectors assume a sample collected anywhere
eventually reaches every sensor.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed or disconnected sensor graphs."""


@dataclass(frozen=True)
class Topology:
    """Immutable undirected sensor network.

    Attributes:
        n_sensors: Number of sensors K.
        edges: Sorted tuple of ``(i, j)`` pairs with ``i < j``.
        neighbor_lists: ``neighbor_lists[k]`` is the sorted tuple of sensors
            adjacent to ``k``.
    """

    n_sensors: int
    edges: tuple[tuple[int, int], ...]
    neighbor_lists: tuple[tuple[int, ...], ...]

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbor_lists], dtype=np.int64)

    def neighborhood(self, k: int) -> tuple[int, ...]:
        """Sensor ``k`` together with its neighbours, sorted."""
        return tuple(sorted((k,) + self.neighbor_lists[k]))

    def is_complete(self) -> bool:
        return len(self.edges) == self.n_sensors * (self.n_sensors - 1) // 2

    def to_dict(self) -> dict:
        return {
            "kind": "edges",
            "n": self.n_sensors,
            "edges": [list(e) for e in self.edges],
        }


def _build(n: int, pairs: Iterable[Sequence[int]], check_connected: bool = True) -> Topology:
    if int(n) != n or n < 1:
        raise TopologyError(f"number of sensors must be a positive integer, got {n!r}")
    n = int(n)
    seen: set[tuple[int, int]] = set()
    for pair in pairs:
        if len(pair) != 2:
            raise TopologyError(f"edge {pair!r} is not a pair")
        i, j = (int(v) for v in pair)
        if not (0 <= i < n and 0 <= j < n):
            raise TopologyError(f"edge {(i, j)} has an id outside [0, {n})")
        if i == j:
            raise TopologyError(f"self-loop at sensor {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise TopologyError(f"duplicate edge {key}")
        seen.add(key)
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in seen:
        nbrs[i].append(j)
        nbrs[j].append(i)
    topo = Topology(
        n_sensors=n,
        edges=tuple(sorted(seen)),
        neighbor_lists=tuple(tuple(sorted(nb)) for nb in nbrs),
    )
    if check_connected and not is_connected(topo):
        raise TopologyError("graph is disconnected")
    return topo


def is_connected(t: Topology) -> bool:
    return bool(np.all(bfs_distances(t, 0) >= 0))


def from_edge_list(n: int, edges: Iterable[Sequence[int]]) -> Topology:
    """Build a connected topology from an explicit edge list."""
    return _build(n, edges)


def ring_topology(n: int, m: int) -> Topology:
    """Circulant graph G(n, m): sensor k is linked to ``(k +- d) mod n``, d = 1..m.

    Requires ``m < n / 2`` so that no two offsets wrap onto the same sensor.
    """
    if int(n) != n or n < 3:
        raise TopologyError(f"ring needs n >= 3, got {n!r}")
    if int(m) != m or m < 1:
        raise TopologyError(f"ring needs m >= 1, got {m!r}")
    if 2 * m >= n:
        raise TopologyError(f"ring needs m < n/2, got n={n}, m={m}")
    pairs = [(k, (k + d) % n) for k in range(n) for d in range(1, m + 1)]
    return _build(n, pairs)


def complete_topology(n: int) -> Topology:
    if n == 1:
        return _build(1, [])
    return _build(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_connected_topology(n: int, p: float, rng: np.random.Generator) -> Topology:
    """Random spanning tree plus independent extra edges with probability ``p``.

    Used by tests to exercise irregular graphs.
    """
    order = rng.permutation(n)
    pairs = set()
    for idx in range(1, n):
        parent = order[rng.integers(0, idx)]
        child = order[idx]
        pairs.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.random() < p:
                pairs.add((i, j))
    return _build(n, sorted(pairs))


def topology_from_spec(spec: dict) -> Topology:
    """Decode ``{"kind": "ring", "n", "m"}`` or ``{"kind": "edges", "n", "edges"}``."""
    kind = spec.get("kind")
    if kind == "ring":
        return ring_topology(spec["n"], spec["m"])
    if kind == "edges":
        return from_edge_list(spec["n"], spec["edges"])
    if kind == "complete":
        return complete_topology(spec["n"])
    raise TopologyError(f"unknown topology kind {kind!r}")


def bfs_distances(t: Topology, source: int) -> np.ndarray:
    """Hop counts from ``source``; -1 marks unreachable sensors."""
    dist = np.full(t.n_sensors, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in t.neighbor_lists[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def delay_matrix(t: Topology) -> np.ndarray:
    """Dissemination delays ``nu[l, k]`` in slots, ``max(1, hop distance)``.

    Self and direct neighbours both have delay 1 because a neighbour's fresh
    sample is relayed within the slot it is taken.
    """
    nu = np.vstack([bfs_distances(t, s) for s in range(t.n_sensors)])
    if np.any(nu < 0):
        raise TopologyError("graph is disconnected")
    nu = np.maximum(nu, 1)
    nu.setflags(write=False)
    return nu


def adjacency_matrix(t: Topology) -> np.ndarray:
    a = np.zeros((t.n_sensors, t.n_sensors))
    for i, j in t.edges:
        a[i, j] = a[j, i] = 1.0
    return a


def degree_matrix(t: Topology) -> np.ndarray:
    return np.diag(t.degrees.astype(float))


def laplacian(t: Topology) -> np.ndarray:
    return degree_matrix(t) - adjacency_matrix(t)
