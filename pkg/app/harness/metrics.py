"""
Estimation metrics and communication accounting.

Error arrays follow one layout throughout: squared position errors of shape
(runs, n_steps, S, P), S = estimating nodes (1 for centralized trackers,
K for distributed ones), P = targets. Means over runs use math.fsum, so a
batch gives the same numbers whatever order or process its runs came from.

This module provides:
  - position_sq_errors: per-run (n_steps, S, P) squared errors
  - rmse_n / armse / sigma_armse / track_loss
  - comm_cost / sdpf_cost: real numbers transmitted per time step
  - MetricsReport: summary of one method's batch (JSON round-trip)
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..network import SensorNetwork
from ..scenario.config import Method
from ..scenario.model import position_indices

TRACK_LOSS_THRESHOLD = 5.0  # m


def position_sq_errors(estimates: np.ndarray, truth: np.ndarray, n_targets: int) -> np.ndarray:
    """estimates (n_steps, S, M_state) against truth rows 1..n_steps -> (n_steps, S, P)."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if tru.shape[0] == est.shape[0] + 1:
        tru = tru[1:]
    if tru.shape[0] != est.shape[0]:
        raise ValueError(f"{est.shape[0]} estimate steps against {tru.shape[0]} truth steps")
    idx = list(position_indices(n_targets))
    diff = est[..., idx] - tru[:, None, idx]
    d = diff.reshape(diff.shape[0], diff.shape[1], n_targets, 2)
    return np.sum(d * d, axis=3)


def _as_batch(sq_errors: np.ndarray) -> np.ndarray:
    e = np.asarray(sq_errors, dtype=float)
    if e.ndim == 3:
        e = e[None]
    if e.ndim != 4:
        raise ValueError(f"expected (runs, n_steps, S, P) squared errors, got shape {e.shape}")
    return e


def _exact_mean(values: np.ndarray, axis: int) -> np.ndarray:
    """Correctly rounded mean over every axis except axis."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0).reshape(values.shape[axis], -1)
    return np.array([math.fsum(row) / row.size for row in v]) if v.shape[1] else np.full(v.shape[0], np.nan)


def rmse_n(sq_errors: np.ndarray) -> np.ndarray:
    """RMSE_n = sqrt(mean over runs, nodes and targets of the squared position error)."""
    e = _as_batch(sq_errors)
    return np.sqrt(_exact_mean(e, 1))


def armse(series: np.ndarray) -> float:
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValueError("ARMSE of an empty series")
    return float(np.sqrt(math.fsum((s * s).ravel()) / s.size))


def sigma_armse(sq_errors: np.ndarray) -> float:
    """Population standard deviation over nodes of each node's RMS position error."""
    e = _as_batch(sq_errors)
    per_node = np.sqrt(_exact_mean(e, 2))
    return float(np.std(per_node)) if per_node.size > 1 else 0.0


def final_errors(sq_errors: np.ndarray) -> np.ndarray:
    """Per run: mean over targets and nodes of the position error at the last step."""
    e = _as_batch(sq_errors)
    return _exact_mean(np.sqrt(e[:, -1]), 0)


def track_loss(per_run_final: np.ndarray, threshold: float = TRACK_LOSS_THRESHOLD) -> tuple[float, np.ndarray]:
    """(percentage of lost runs, boolean mask of lost runs)."""
    f = np.asarray(per_run_final, dtype=float).reshape(-1)
    lost = ~(f <= threshold)   # NaN counts as lost
    pct = 100.0 * float(lost.mean()) if f.size else 0.0
    return pct, lost


def _hop_sum(net: SensorNetwork, source: int) -> int:
    return int(net.hop_counts(source).sum())


def comm_cost(method: Method | str, net: SensorNetwork, *, iterations: int, n_consensus: int,
              state_dim: int, n_consensus_moments: int = 0, meas_dims: Sequence[int] | None = None,
              fusion_center: int | None = None, include_positions: bool = False) -> int:
    """Real numbers transmitted over one hop per time step.

    LC-DPF / LC-DGPF: K I N_c; R-LC-DGPF: K I (N_c + N_c');
    CPF / CGPF: sum_k H_k N_k + M H', H_k the hops from sensor k to the fusion
    center and H' = sum_k H_k the hops to hand the estimate back to every
    sensor. include_positions routes the 2-D sensor location with each
    measurement.
    """
    m = Method.parse(method.value if isinstance(method, Method) else method)
    K = net.K
    if m in (Method.LC_DPF, Method.LC_DGPF):
        return K * iterations * n_consensus
    if m is Method.R_LC_DGPF:
        return K * iterations * (n_consensus + n_consensus_moments)
    dims = np.ones(K, dtype=np.int64) if meas_dims is None else np.asarray(meas_dims, dtype=np.int64)
    if include_positions:
        dims = dims + 2
    fc = fusion_center if fusion_center is not None else net.nearest_sensor((0.0, 0.0))
    hops = net.hop_counts(fc)
    return int(hops @ dims) + state_dim * int(hops.sum())


def sdpf_cost(net: SensorNetwork, meas_dims: Sequence[int] | None = None) -> int:
    """Every measurement flooded to every sensor: sum_k H''_k N_k."""
    dims = np.ones(net.K, dtype=np.int64) if meas_dims is None else np.asarray(meas_dims, dtype=np.int64)
    return int(sum(_hop_sum(net, k) * int(dims[k]) for k in range(net.K)))


def _clean(v: float | None) -> float | None:
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass
class MetricsReport:
    method: str
    runs: int
    rmse: list[float] = field(default_factory=list)
    adjusted_rmse: list[float | None] = field(default_factory=list)
    armse: float | None = None
    adjusted_armse: float | None = None
    sigma_armse: float | None = None
    adjusted_sigma_armse: float | None = None
    track_loss_pct: float = 0.0
    lost_runs: list[int] = field(default_factory=list)
    diverged_runs: list[int] = field(default_factory=list)
    transmissions_per_step: float = 0.0
    transmissions_total: int = 0

    @classmethod
    def from_errors(cls, method: str, sq_errors: np.ndarray, *, threshold: float = TRACK_LOSS_THRESHOLD,
                    diverged: Sequence[bool] = (), transmissions: Sequence[int] = ()) -> "MetricsReport":
        e = _as_batch(sq_errors)
        pct, lost = track_loss(final_errors(e), threshold)
        series = rmse_n(e)
        kept = e[~lost]
        if kept.shape[0]:
            adj = rmse_n(kept)
            adj_list = [float(v) for v in adj]
            adj_armse, adj_sigma = armse(adj), sigma_armse(kept)
        else:
            adj_list, adj_armse, adj_sigma = [None] * e.shape[1], None, None
        tx = np.asarray(list(transmissions), dtype=np.int64)
        return cls(
            method=str(method),
            runs=int(e.shape[0]),
            rmse=[float(v) for v in series],
            adjusted_rmse=adj_list,
            armse=_clean(armse(series)),
            adjusted_armse=_clean(adj_armse),
            sigma_armse=_clean(sigma_armse(e)),
            adjusted_sigma_armse=_clean(adj_sigma),
            track_loss_pct=pct,
            lost_runs=[int(i) for i in np.flatnonzero(lost)],
            diverged_runs=[i for i, d in enumerate(diverged) if d],
            transmissions_per_step=float(tx.mean()) if tx.size else 0.0,
            transmissions_total=int(tx.sum()),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))
