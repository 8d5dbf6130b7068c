"""
Sensor network topology: geometry, neighbor sets and Metropolis weights.

Sensors are static points in a square area; two sensors are neighbors iff
their distance is within the communication range. The graph must be
connected for consensus to reach the network-wide average.

Topology documents (JSON):
  {"version": 1, "comm_range": float, "positions": [[x, y], ...],
   "adjacency": [[k', ...], ...]}
Adjacency is stored explicitly so an exported topology reloads unchanged.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

TOPOLOGY_VERSION = 1
DEFAULT_JITTER = 0.25
DEFAULT_RETRIES = 100


class TopologyError(ValueError):
    pass


class NotPerfectSquare(TopologyError):
    pass


class NotConnected(TopologyError):
    pass


@dataclass(frozen=True, eq=False)
class SensorNetwork:
    """K static sensors with symmetric, irreflexive neighbor sets (ascending order)."""
    positions: np.ndarray = field(repr=False)
    comm_range: float
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if len(self.neighbors) != pos.shape[0]:
            raise TopologyError(f"{len(self.neighbors)} neighbor sets for {pos.shape[0]} sensors")
        for k, nb in enumerate(self.neighbors):
            if k in nb:
                raise TopologyError(f"sensor {k} lists itself as a neighbor")
            for j in nb:
                if k not in self.neighbors[j]:
                    raise TopologyError(f"adjacency is not symmetric between {k} and {j}")

    @classmethod
    def from_positions(cls, positions: np.ndarray, comm_range: float, *, require_connected: bool = True) -> "SensorNetwork":
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
        within = dist <= comm_range
        np.fill_diagonal(within, False)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in within)
        net = cls(pos, float(comm_range), nbrs)
        if require_connected and not net.is_connected():
            raise NotConnected(f"communication graph of {net.K} sensors with range {comm_range} m is not connected")
        return net

    @property
    def K(self) -> int:
        return int(self.positions.shape[0])

    def degree(self, k: int) -> int:
        return len(self.neighbors[k])

    def adjacency_matrix(self) -> np.ndarray:
        adj = np.zeros((self.K, self.K), dtype=bool)
        for k, nb in enumerate(self.neighbors):
            adj[k, list(nb)] = True
        return adj

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.K))
        g.add_edges_from((k, j) for k, nb in enumerate(self.neighbors) for j in nb if j > k)
        return g

    def is_connected(self) -> bool:
        return self.K > 0 and nx.is_connected(self.graph())

    def hop_counts(self, source: int) -> np.ndarray:
        """Shortest-path hop count from source to every sensor."""
        lengths = nx.single_source_shortest_path_length(self.graph(), source)
        if len(lengths) != self.K:
            raise NotConnected(f"sensor {source} cannot reach every sensor")
        return np.array([lengths[k] for k in range(self.K)], dtype=np.int64)

    def nearest_sensor(self, point: Sequence[float]) -> int:
        return int(np.argmin(np.linalg.norm(self.positions - np.asarray(point, dtype=float), axis=1)))

    # ---- JSON ----

    def to_dict(self) -> dict:
        return {
            "version": TOPOLOGY_VERSION,
            "comm_range": self.comm_range,
            "positions": self.positions.tolist(),
            "adjacency": [list(nb) for nb in self.neighbors],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SensorNetwork":
        ver = int(doc.get("version", TOPOLOGY_VERSION))
        if ver != TOPOLOGY_VERSION:
            raise TopologyError(f"unsupported topology document version {ver}")
        try:
            pos = np.asarray(doc["positions"], dtype=float)
            rng_m = float(doc["comm_range"])
            adj = tuple(tuple(sorted(int(j) for j in nb)) for nb in doc["adjacency"])
        except KeyError as e:
            raise TopologyError(f"topology document is missing {e}") from None
        return cls(pos, rng_m, adj)


def save_topology(net: SensorNetwork, path: Path | str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(net.to_dict(), indent=2) + "\n", encoding="utf-8")
    return p


def load_topology(path: Path | str) -> SensorNetwork:
    with Path(path).open("r", encoding="utf-8") as f:
        return SensorNetwork.from_dict(json.load(f))


def build_jittered_grid(K: int, area: float, comm_range: float, jitter_fraction: float = DEFAULT_JITTER,
                        rng: np.random.Generator | None = None, *, max_retries: int = DEFAULT_RETRIES) -> SensorNetwork:
    """One sensor per cell of a sqrt(K) x sqrt(K) grid over [0, area]^2.

    Each sensor sits at its cell center plus uniform jitter of
    +-jitter_fraction * cell side per axis. Disconnected draws are redrawn up
    to max_retries times.
    """
    side = math.isqrt(K)
    if K < 1 or side * side != K:
        raise NotPerfectSquare(f"K={K} is not a perfect square")
    if not 0.0 <= jitter_fraction < 0.5:
        raise TopologyError(f"jitter fraction must be in [0, 0.5) (got {jitter_fraction})")
    cell = float(area) / side
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    centers = np.column_stack([(ii.ravel() + 0.5) * cell, (jj.ravel() + 0.5) * cell])
    rng = rng if rng is not None else np.random.default_rng()

    for attempt in range(max(1, max_retries)):
        jitter = rng.uniform(-jitter_fraction * cell, jitter_fraction * cell, size=centers.shape) if jitter_fraction > 0 else 0.0
        net = SensorNetwork.from_positions(centers + jitter, comm_range, require_connected=False)
        if net.is_connected():
            if attempt:
                logger.debug("jittered grid connected after %d redraws", attempt)
            return net
        if jitter_fraction == 0:
            break
    raise NotConnected(f"no connected {side}x{side} grid with range {comm_range} m after {max_retries} draws")


@dataclass(frozen=True, eq=False)
class ConsensusWeights:
    """K x K consensus weight matrix (symmetric, doubly stochastic for Metropolis)."""
    matrix: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return int(self.matrix.shape[0])

    def second_largest_modulus(self) -> float:
        """Largest |eigenvalue| other than the unit eigenvalue; sets the convergence rate."""
        ev = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))))
        return float(ev[-2]) if ev.size > 1 else 0.0


def metropolis_weights(net: SensorNetwork) -> ConsensusWeights:
    """w_kk' = 1 / (1 + max(|N_k|, |N_k'|)) for neighbors, self-weight fills the row to 1."""
    K = net.K
    W = np.zeros((K, K))
    for k, nb in enumerate(net.neighbors):
        for j in nb:
            W[k, j] = 1.0 / (1.0 + max(net.degree(k), net.degree(j)))
    for k in range(K):
        W[k, k] = 1.0 - W[k].sum()
    return ConsensusWeights(W)
