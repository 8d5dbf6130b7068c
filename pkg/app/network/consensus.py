"""
Synchronous average consensus over the simulated sensor network.

Each iteration every sensor k replaces its state by
    zeta_k <- sum_{k' in N_k + {k}} w_kk' zeta_k'
using the states of the previous iteration (barrier-synchronized rounds).
Sums within a sensor's update run over k' in ascending order, so results do
not depend on how the vectorized update is scheduled.

N_c scalar consensus algorithms run in parallel as the columns of a K x N_c
state matrix; one iteration broadcasts K * N_c real numbers.
"""
from __future__ import annotations

import logging
from typing import Callable, Protocol, Union

import numpy as np

from .ledger import TransmissionLedger
from .topology import ConsensusWeights, SensorNetwork

logger = logging.getLogger(__name__)

WeightsLike = Union[ConsensusWeights, Callable[[int], ConsensusWeights]]


def _gather_plan(net: SensorNetwork, weights: ConsensusWeights) -> tuple[np.ndarray, np.ndarray]:
    # Per sensor: N_k + {k} in ascending order, padded with (k, 0.0).
    width = 1 + max((net.degree(k) for k in range(net.K)), default=0)
    idx = np.repeat(np.arange(net.K)[:, None], width, axis=1)
    wts = np.zeros((net.K, width))
    for k, nb in enumerate(net.neighbors):
        members = sorted((*nb, k))
        idx[k, :len(members)] = members
        wts[k, :len(members)] = weights.matrix[k, members]
    return idx, wts


def _iterate(states: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    out = wts[:, 0, None] * states[idx[:, 0]]
    for col in range(1, idx.shape[1]):
        out = out + wts[:, col, None] * states[idx[:, col]]
    return out


def run_consensus(net: SensorNetwork, weights: WeightsLike, init: np.ndarray, i_max: int, *,
                  ledger: TransmissionLedger | None = None, stage: str = "consensus",
                  tol: float | None = None) -> tuple[np.ndarray, int]:
    """Run up to i_max synchronous iterations on K x N_c initial states.

    Stops early when tol is given and no state moved by tol or more in the
    last iteration. Returns (final states, iterations executed); the ledger,
    if given, is charged K * iterations * N_c.
    """
    if i_max < 0:
        raise ValueError("i_max must be >= 0")
    states = np.array(init, dtype=float, copy=True)
    vector = states.ndim == 1
    if vector:
        states = states[:, None]
    if states.shape[0] != net.K:
        raise ValueError(f"initial states have {states.shape[0]} rows for {net.K} sensors")

    static_plan = _gather_plan(net, weights) if isinstance(weights, ConsensusWeights) else None
    done = 0
    for i in range(1, i_max + 1):
        idx, wts = static_plan if static_plan is not None else _gather_plan(net, weights(i))
        nxt = _iterate(states, idx, wts)
        done = i
        if tol is not None and np.max(np.abs(nxt - states), initial=0.0) < tol:
            states = nxt
            logger.debug("consensus converged after %d iterations", i)
            break
        states = nxt

    if ledger is not None:
        ledger.add(stage, net.K * done * states.shape[1])
    return (states[:, 0] if vector else states), done


def consensus_sum(net: SensorNetwork, weights: WeightsLike, addends: np.ndarray, i_max: int, *,
                  ledger: TransmissionLedger | None = None, stage: str = "consensus",
                  tol: float | None = None) -> np.ndarray:
    """Per-sensor estimates K * zeta_k of the network-wide sum of the addends."""
    states, _ = run_consensus(net, weights, addends, i_max, ledger=ledger, stage=stage, tol=tol)
    return net.K * states


class Summer(Protocol):
    """Computes per-sensor estimates of column sums of a K x N matrix."""

    def __call__(self, addends: np.ndarray, stage: str) -> np.ndarray: ...


class ConsensusSummer:
    def __init__(self, net: SensorNetwork, weights: WeightsLike, i_max: int, *,
                 tol: float | None = None, ledger: TransmissionLedger | None = None):
        self.net = net
        self.weights = weights
        self.i_max = int(i_max)
        self.tol = tol
        self.ledger = ledger

    def __call__(self, addends: np.ndarray, stage: str) -> np.ndarray:
        return consensus_sum(self.net, self.weights, addends, self.i_max,
                             ledger=self.ledger, stage=stage, tol=self.tol)


class ExactSummer:
    """Direct summation oracle: every sensor receives the exact sum, nothing is charged."""

    def __init__(self, K: int):
        self.K = int(K)

    def __call__(self, addends: np.ndarray, stage: str) -> np.ndarray:
        a = np.asarray(addends, dtype=float)
        if a.shape[0] != self.K:
            raise ValueError(f"addends have {a.shape[0]} rows for {self.K} sensors")
        total = a.sum(axis=0)
        return np.broadcast_to(total, a.shape).copy()
