"""
Experiment suites built from run_experiment.

  table1         CPF, CGPF, LC-DPF, LC-DGPF, R-LC-DGPF and LC-DPF with exact sums
  iterations     LC-DGPF and R-LC-DGPF over a list of consensus iteration
                 counts, each with its exact-sum reference
  low_particles  LC-DPF vs R-LC-DGPF at J = 400 (J' = 16)

All methods of a suite share one topology and the same per-run truth and
measurements (same master seed).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..network import SensorNetwork, save_topology
from ..scenario import ExperimentConfig, Method
from .export import METRICS_FILE, RMSE_FILE, TOPOLOGY_FILE, write_metrics_json, write_rmse_csv
from .metrics import MetricsReport
from .runner import build_network, run_experiment

logger = logging.getLogger(__name__)

TABLE1_METHODS = (Method.CPF, Method.CGPF, Method.LC_DPF, Method.LC_DGPF, Method.R_LC_DGPF)
DEFAULT_ITERATIONS = (4, 8, 16)
ITERATIONS_PARTICLES = 1000
LOW_PARTICLES = 400


@dataclass
class SuiteResult:
    name: str
    network: SensorNetwork
    reports: list[MetricsReport] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def by_label(self, label: str) -> MetricsReport:
        return self.reports[self.labels.index(label)]

    def write(self, out_dir: Path | str, config: ExperimentConfig) -> list[Path]:
        out = Path(out_dir)
        return [
            write_rmse_csv(self.reports, out / RMSE_FILE),
            write_metrics_json(self.reports, out / METRICS_FILE, config=config.to_dict(),
                               extra={"suite": self.name, "labels": list(self.labels)}),
            save_topology(self.network, out / TOPOLOGY_FILE),
        ]


def _run(suite: SuiteResult, cfg: ExperimentConfig, label: str) -> MetricsReport:
    logger.info("%s: running %s (%d runs)", suite.name, label, cfg.runs)
    res = run_experiment(cfg, suite.network)
    res.report.method = label
    suite.reports.append(res.report)
    suite.labels.append(label)
    return res.report


def table1(cfg: ExperimentConfig) -> SuiteResult:
    suite = SuiteResult("table1", build_network(cfg))
    for m in TABLE1_METHODS:
        _run(suite, cfg.with_method(m, exact_sums=False), m.value)
    _run(suite, cfg.with_method(Method.LC_DPF, exact_sums=True), "LC-DPF (exact sums)")
    return suite


def iterations(cfg: ExperimentConfig, counts: Sequence[int] = DEFAULT_ITERATIONS,
               n_particles: int = ITERATIONS_PARTICLES) -> SuiteResult:
    suite = SuiteResult("iterations", build_network(cfg))
    for m in (Method.LC_DGPF, Method.R_LC_DGPF):
        for i in counts:
            _run(suite, cfg.with_method(m, iterations=int(i), n_particles=n_particles, exact_sums=False),
                 f"{m.value} I={int(i)}")
        _run(suite, cfg.with_method(m, n_particles=n_particles, exact_sums=True), f"{m.value} (exact sums)")
    return suite


def low_particles(cfg: ExperimentConfig, n_particles: int = LOW_PARTICLES) -> SuiteResult:
    """J' = J / K = 16 for K = 25: R-LC-DGPF still fits alpha (R_a = 15) with indirect gamma."""
    suite = SuiteResult("low-particles", build_network(cfg))
    for m in (Method.LC_DPF, Method.R_LC_DGPF):
        _run(suite, cfg.with_method(m, n_particles=n_particles, exact_sums=False, gamma="indirect"), m.value)
    return suite
