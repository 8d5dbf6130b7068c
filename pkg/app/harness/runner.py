"""
Monte Carlo experiment runner.

This module provides:
  - build_network: topology from a file or a seeded jittered grid
  - build_tracker: one tracker (CPF, CGPF, LC-DPF, LC-DGPF, R-LC-DGPF) for a run
  - simulate_run: truth, measurements and filtering for one run
  - run_experiment: all runs (optionally in a process pool) -> ExperimentResult

Notes
  - Run r uses seed SeedSequence([master, r]); truth, measurements and filter
    draw from separate streams of it, so every method sees the same truth and
    measurements for a given (master seed, run).
  - Results are ordered by run index before aggregation; outputs do not
    depend on the number of workers.
  - A FilterDivergence escaping a tracker freezes its estimates for the rest
    of the run; the run then normally ends up as a lost track.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..filters import (
    CentralizedGPF,
    CentralizedPF,
    FilterDivergence,
    LcConfig,
    LcDgpf,
    LcDpf,
    LikelihoodConsensus,
    PartialMoments,
    RLcDgpf,
    Tracker,
    stream_rng,
)
from ..network import (
    ConsensusSummer,
    ExactSummer,
    SensorNetwork,
    TransmissionLedger,
    build_jittered_grid,
    load_topology,
    metropolis_weights,
)
from ..scenario import (
    AcousticModel,
    ExperimentConfig,
    Method,
    PriorSpec,
    TargetDynamics,
    jlf_factory,
    measure_all,
    n_consensus_lc,
    position_indices,
    sensor_models,
    simulate_truth,
)
from .metrics import MetricsReport, comm_cost, position_sq_errors

logger = logging.getLogger(__name__)

# Stream tags; the filters use 0 and 1.
STREAM_TOPOLOGY = 7
STREAM_TRUTH = 10
STREAM_MEASURE = 11


def run_seed(master: int, run: int) -> int:
    return int(np.random.SeedSequence([int(master), int(run)]).generate_state(1)[0])


def build_network(cfg: ExperimentConfig) -> SensorNetwork:
    scen = cfg.scenario
    if cfg.topology_path:
        net = load_topology(cfg.topology_path)
        if net.K != scen.n_sensors:
            logger.warning("topology file has %d sensors, config says %d; using the file", net.K, scen.n_sensors)
        return net
    return build_jittered_grid(scen.n_sensors, scen.area, scen.comm_range, scen.jitter,
                               stream_rng(cfg.seed, STREAM_TOPOLOGY, 0, 0))


def lc_config(cfg: ExperimentConfig) -> LcConfig:
    scen, filt = cfg.scenario, cfg.filter
    sel = position_indices(scen.n_targets)
    frame = (scen.area / 2.0,) * len(sel) if filt.scaled_frame else None
    return LcConfig(degree=filt.degree, select=sel, offset=frame, scale=frame,
                    gamma=filt.gamma, statistic=filt.statistic)


def build_tracker(cfg: ExperimentConfig, net: SensorNetwork, seed: int,
                  ledger: TransmissionLedger | None = None) -> Tracker:
    scen, filt = cfg.scenario, cfg.filter
    method = filt.method_enum
    dynamics = TargetDynamics.from_config(scen)
    acoustic = AcousticModel.from_config(scen)
    if method is Method.CPF:
        return CentralizedPF(dynamics, jlf_factory(net, acoustic), filt.n_particles, seed)
    if method is Method.CGPF:
        return CentralizedGPF(dynamics, jlf_factory(net, acoustic), filt.n_particles, seed)

    if filt.exact_sums:
        summer = ExactSummer(net.K)
    else:
        summer = ConsensusSummer(net, metropolis_weights(net), filt.iterations, tol=filt.tol, ledger=ledger)
    lc = LikelihoodConsensus(sensor_models(net, acoustic), lc_config(cfg), summer, scen.state_dim)
    if method is Method.LC_DPF:
        return LcDpf(dynamics, lc, filt.n_particles, seed)
    if method is Method.LC_DGPF:
        return LcDgpf(dynamics, lc, filt.n_particles, seed)
    return RLcDgpf(dynamics, lc, filt.n_particles, seed)


def expected_transmissions(cfg: ExperimentConfig, net: SensorNetwork) -> int:
    """Per-step cost of the configured method with I consensus iterations."""
    scen, filt = cfg.scenario, cfg.filter
    if filt.exact_sums and filt.method_enum.distributed:
        return 0
    lc = lc_config(cfg)
    n_c = n_consensus_lc(filt.degree, len(lc.select))
    if filt.statistic == "general":
        dim = len(lc.select)
        n_c = math.comb(filt.degree + dim, dim) + math.comb(2 * filt.degree + dim, dim)
    return comm_cost(filt.method_enum, net, iterations=filt.iterations, n_consensus=n_c,
                     n_consensus_moments=PartialMoments.payload_size(scen.state_dim), state_dim=scen.state_dim)


@dataclass
class RunResult:
    run: int
    sq_errors: np.ndarray = field(repr=False)      # (n_steps, S, P)
    diverged: bool = False
    transmissions: list[int] = field(default_factory=list)
    truth: np.ndarray | None = field(default=None, repr=False)
    estimates: np.ndarray | None = field(default=None, repr=False)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    network: SensorNetwork
    report: MetricsReport
    runs: list[RunResult]


def simulate_run(cfg: ExperimentConfig, net: SensorNetwork, run: int, *, keep_trajectory: bool = False) -> RunResult:
    scen = cfg.scenario
    seed = run_seed(cfg.seed, run)
    dynamics = TargetDynamics.from_config(scen)
    acoustic = AcousticModel.from_config(scen)
    prior = PriorSpec.from_config(scen)

    truth = simulate_truth(dynamics, prior, scen.n_steps, stream_rng(seed, STREAM_TRUTH, 0, 0), fixed_x0=scen.fixed_x0,
                           area=scen.area if scen.confine_truth else None)
    meas_rng = stream_rng(seed, STREAM_MEASURE, 0, 0)
    measurements = np.stack([measure_all(truth[n], net, acoustic, meas_rng) for n in range(1, scen.n_steps + 1)])

    ledger = TransmissionLedger()
    tracker = build_tracker(cfg, net, seed, ledger)
    tracker.initialize(prior.belief())
    fixed_cost = None if (cfg.filter.method_enum.distributed and not cfg.filter.exact_sums) else expected_transmissions(cfg, net)

    estimates: list[np.ndarray] = []
    diverged = False
    for n in range(1, scen.n_steps + 1):
        if not diverged:
            try:
                est = tracker.step(n, measurements[n - 1])
            except FilterDivergence as e:
                logger.warning("run %d, step %d: %s; estimates frozen", run, n, e)
                diverged = True
                est = estimates[-1] if estimates else np.broadcast_to(prior.belief().mean, (1, scen.state_dim))
        else:
            est = estimates[-1]
        estimates.append(np.asarray(est, dtype=float))
        ledger.end_step()

    est_arr = np.stack(estimates)
    diverged = diverged or bool(tracker.diverged)
    tx = [fixed_cost] * scen.n_steps if fixed_cost is not None else ledger.per_step
    logger.info("run %d (%s): done%s", run, tracker.name, ", diverged" if diverged else "")
    return RunResult(
        run=run,
        sq_errors=position_sq_errors(est_arr, truth, scen.n_targets),
        diverged=diverged,
        transmissions=[int(v) for v in tx],
        truth=truth if keep_trajectory else None,
        estimates=est_arr if keep_trajectory else None,
    )


def _run_job(job: tuple[ExperimentConfig, SensorNetwork, int, bool]) -> RunResult:
    cfg, net, run, keep = job
    return simulate_run(cfg, net, run, keep_trajectory=keep)


def run_experiment(cfg: ExperimentConfig, net: SensorNetwork | None = None) -> ExperimentResult:
    """Execute cfg.runs Monte Carlo runs of the configured method and summarize them."""
    cfg.validate()
    net = net if net is not None else build_network(cfg)
    jobs = [(cfg, net, r, cfg.save_trajectory and r == 0) for r in range(cfg.runs)]
    if cfg.workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    results.sort(key=lambda r: r.run)

    sq = np.stack([r.sq_errors for r in results])
    tx = [v for r in results for v in r.transmissions]
    report = MetricsReport.from_errors(
        cfg.filter.method_enum.value + (" (exact sums)" if cfg.filter.exact_sums and cfg.filter.method_enum.distributed else ""),
        sq,
        threshold=cfg.track_loss_threshold,
        diverged=[r.diverged for r in results],
        transmissions=tx,
    )
    return ExperimentResult(cfg, net, report, results)
