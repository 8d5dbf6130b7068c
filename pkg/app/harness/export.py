"""
Result files written by the runner and the suites.

  rmse.csv        method, n, rmse, adjusted_rmse     (one row per method and step)
  metrics.json    {"config": ..., "reports": [MetricsReport, ...], "ledger": ...}
  topology.json   SensorNetwork.to_dict()
  trajectory.csv  n, node, truth_0.., est_0..        (run 0 only, on request)

Floats are written with repr(), so identical results give identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..network import save_topology
from .metrics import MetricsReport
from .runner import ExperimentResult

RMSE_FILE = "rmse.csv"
METRICS_FILE = "metrics.json"
TOPOLOGY_FILE = "topology.json"
TRAJECTORY_FILE = "trajectory.csv"


def _num(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_rmse_csv(reports: Iterable[MetricsReport], path: Path | str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "n", "rmse", "adjusted_rmse"])
        for rep in reports:
            for n, (r, a) in enumerate(zip(rep.rmse, rep.adjusted_rmse), start=1):
                w.writerow([rep.method, n, _num(r), _num(a)])
    return p


def write_metrics_json(reports: Sequence[MetricsReport], path: Path | str, *, config: dict | None = None,
                       extra: dict | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config": config, "reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return p


def read_metrics_json(path: Path | str) -> list[MetricsReport]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MetricsReport.from_dict(r) for r in doc.get("reports", [])]


def write_trajectory_csv(truth: np.ndarray, estimates: np.ndarray, path: Path | str) -> Path:
    """truth (n_steps + 1, M), estimates (n_steps, S, M); row per (n, node)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    M = truth.shape[1]
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n", "node"] + [f"truth_{i}" for i in range(M)] + [f"est_{i}" for i in range(M)])
        for n in range(estimates.shape[0]):
            for s in range(estimates.shape[1]):
                w.writerow([n + 1, s] + [repr(float(v)) for v in truth[n + 1]]
                           + [repr(float(v)) for v in estimates[n, s]])
    return p


def write_experiment(result: ExperimentResult, out_dir: Path | str) -> list[Path]:
    """rmse.csv, metrics.json, topology.json (+ trajectory.csv) for one method's batch."""
    out = Path(out_dir)
    written = [
        write_rmse_csv([result.report], out / RMSE_FILE),
        write_metrics_json([result.report], out / METRICS_FILE, config=result.config.to_dict()),
        save_topology(result.network, out / TOPOLOGY_FILE),
    ]
    first = result.runs[0] if result.runs else None
    if first is not None and first.truth is not None and first.estimates is not None:
        written.append(write_trajectory_csv(first.truth, first.estimates, out / TRAJECTORY_FILE))
    return written
