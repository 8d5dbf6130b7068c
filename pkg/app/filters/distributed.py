"""
Likelihood consensus and the LC-based distributed filters.

This module provides:
  - LcConfig: basis degree, basis coordinates and frame, gamma mode,
    statistic variant
  - LikelihoodConsensus: per-sensor LS fit -> local statistic -> network sum
  - LcDpf (distributed PF), LcDgpf (distributed Gaussian PF),
    RLcDgpf (reduced-complexity distributed GPF with a second consensus
    stage over partial moments)
  - lcdpf_step / lcdgpf_step / rlcdgpf_step: one time step on explicit
    per-sensor state

Notes
  - Sensor k draws from its own stream (seed, tag, k, n). shared_streams
    forces every sensor onto stream 0, which makes the particle draws of
    all sensors identical (and identical to the centralized filters).
  - Summation goes through a Summer: ConsensusSummer charges the ledger,
    ExactSummer is the direct-sum oracle.
  - RLcDgpf forms nonnormalized weights exp(log f~(z|x) - c_k). c_k is the
    largest log f~ over a reference cloud: J standard-normal draws, shared
    by all sensors through stream (seed, STREAM_SHIFT, 0, n), mapped
    through each sensor's predicted Gaussian. Sensors that agree on the
    statistic and the belief agree on c_k, so the shift cancels in mu and C.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from ..lccore import (
    ExpFamilyLocalModel,
    GaussianMeasurementModel,
    JlfStatistic,
    PolynomialBasis,
    consensus_payload,
    eval_log_jlf,
    fit_alpha,
    gamma_direct,
    gamma_indirect_gaussian,
    local_beta,
    local_general_terms,
    payload_size,
    statistic_from_payload,
)
from ..network import Summer
from .centralized import STREAM_INIT, STREAM_PREDICT
from .particles import (
    Dynamics,
    FilterDivergence,
    GaussianBelief,
    LogLikelihood,
    ParticleBudgetError,
    ParticleSet,
    PartialMoments,
    gaussian_moments,
    point_estimate,
    propagate,
    stream_rng,
    systematic_resample,
    weight_update,
)

logger = logging.getLogger(__name__)

# Largest exponent passed to exp() when forming nonnormalized weights; keeps
# sum w x x^T finite for J' particles and K sensors.
MAX_LOG_WEIGHT = 300.0
STREAM_SHIFT = 2

GammaMode = Literal["indirect", "direct"]
StatisticVariant = Literal["polynomial", "general"]


@dataclass(frozen=True)
class LcConfig:
    degree: int = 2                          # R_p
    select: tuple[int, ...] | None = None    # state coordinates the basis lives on
    offset: tuple[float, ...] | None = None
    scale: tuple[float, ...] | None = None
    gamma: GammaMode = "indirect"
    statistic: StatisticVariant = "polynomial"
    ridge: bool = True

    def basis_dim(self, state_dim: int) -> int:
        return state_dim if self.select is None else len(self.select)


class LikelihoodConsensus:
    """Builds each sensor's local statistic and sums the statistics over the network."""

    def __init__(self, models: Sequence[ExpFamilyLocalModel], config: LcConfig, summer: Summer, state_dim: int):
        if not models:
            raise ValueError("likelihood consensus needs at least one sensor model")
        if config.gamma not in ("indirect", "direct"):
            raise ValueError(f"unknown gamma mode {config.gamma!r}")
        if config.statistic not in ("polynomial", "general"):
            raise ValueError(f"unknown statistic variant {config.statistic!r}")
        if config.gamma == "indirect" and not all(isinstance(m, GaussianMeasurementModel) for m in models):
            raise ValueError("indirect gamma needs Gaussian measurement models")
        self.models = list(models)
        self.config = config
        self.summer = summer
        dim = config.basis_dim(state_dim)
        self.phi = PolynomialBasis.create(dim, config.degree, config.offset, config.scale)
        self.psi = self.phi.with_degree(2 * config.degree)
        self.select = None if config.select is None else list(config.select)

    @property
    def K(self) -> int:
        return len(self.models)

    @property
    def payload_size(self) -> int:
        """N_c, the number of scalar consensus algorithms run in parallel."""
        return payload_size(self.phi, self.psi, self.config.statistic)

    def min_fit_points(self) -> int:
        """Points each sensor needs for its LS fits."""
        return len(self.psi) if self.config.gamma == "direct" else len(self.phi)

    def local_statistic(self, k: int, z: np.ndarray, points: np.ndarray) -> JlfStatistic:
        model = self.models[k]
        cfg = self.config
        alpha = fit_alpha(model, self.phi, points, select=self.select, ridge=cfg.ridge)
        if cfg.gamma == "indirect":
            gamma = gamma_indirect_gaussian(alpha, model.Q_inv, self.psi)
        else:
            gamma = gamma_direct(model, self.psi, points, select=self.select, ridge=cfg.ridge)
        if cfg.statistic == "general":
            return local_general_terms(model, z, alpha, gamma)
        return JlfStatistic.from_beta(self.psi, local_beta(z, alpha, gamma, model.b), log_norm=model.log_c(z))

    def run(self, measurements: Sequence[np.ndarray], points: Sequence[np.ndarray]) -> list[JlfStatistic]:
        """One LC round: every sensor ends with its own estimate of the summed statistic."""
        if len(measurements) != self.K or len(points) != self.K:
            raise ValueError(f"need one measurement and one point set per sensor ({self.K})")
        local = [self.local_statistic(k, measurements[k], points[k]) for k in range(self.K)]
        sums = self.summer(np.stack([consensus_payload(s) for s in local]), "lc")
        return [statistic_from_payload(s, row) for s, row in zip(local, sums)]

    def log_jlf(self, stat: JlfStatistic) -> LogLikelihood:
        """Evaluator of the approximate log-JLF on full state vectors."""
        select = self.select

        def evaluate(x: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(x)
            return np.atleast_1d(eval_log_jlf(stat, pts if select is None else pts[:, select]))
        return evaluate


def _sensor_rng(seed: int, k: int, n: int, shared: bool) -> np.random.Generator:
    return stream_rng(seed, STREAM_PREDICT, 0 if shared else k, n)


def _reweight(predicted: ParticleSet, log_jlf: LogLikelihood, k: int) -> tuple[ParticleSet, bool]:
    try:
        return weight_update(predicted, log_jlf), False
    except FilterDivergence as e:
        logger.warning("sensor %d: %s; weights reset to uniform", k, e)
        return ParticleSet.uniform(predicted.particles), True


def _as_measurements(z: np.ndarray, K: int) -> list[np.ndarray]:
    z = np.asarray(z, dtype=float)
    rows = z.reshape(K, -1)
    return [rows[k] for k in range(K)]


def lcdpf_step(particle_sets: Sequence[ParticleSet], measurements: np.ndarray, lc: LikelihoodConsensus,
               dynamics: Dynamics, rngs: Sequence[np.random.Generator]) -> tuple[list[ParticleSet], np.ndarray, bool]:
    """Resample, propagate, LC, reweight with the approximate JLF, estimate; per sensor."""
    predicted = [propagate(systematic_resample(ps, rng), dynamics, rng) for ps, rng in zip(particle_sets, rngs)]
    stats = lc.run(_as_measurements(measurements, lc.K), [p.particles for p in predicted])
    updated, lost = [], False
    for k, (pred, stat) in enumerate(zip(predicted, stats)):
        ps, bad = _reweight(pred, lc.log_jlf(stat), k)
        updated.append(ps)
        lost |= bad
    return updated, np.stack([point_estimate(ps) for ps in updated]), lost


def lcdgpf_step(beliefs: Sequence[GaussianBelief], n_particles: int, measurements: np.ndarray,
                lc: LikelihoodConsensus, dynamics: Dynamics,
                rngs: Sequence[np.random.Generator]) -> tuple[list[GaussianBelief], np.ndarray, bool]:
    """Sample J from N(mu_k, C_k), propagate, LC, reweight, collapse to (mu_k, C_k)."""
    predicted = [propagate(ParticleSet.uniform(b.sample(n_particles, rng)), dynamics, rng)
                 for b, rng in zip(beliefs, rngs)]
    stats = lc.run(_as_measurements(measurements, lc.K), [p.particles for p in predicted])
    post, lost = [], False
    for k, (pred, stat) in enumerate(zip(predicted, stats)):
        ps, bad = _reweight(pred, lc.log_jlf(stat), k)
        post.append(gaussian_moments(ps).repaired())
        lost |= bad
    return post, np.stack([b.mean for b in post]), lost


def _predicted_belief(belief: GaussianBelief, dynamics: Dynamics) -> GaussianBelief:
    G = dynamics.G
    return GaussianBelief(G @ belief.mean, G @ belief.cov @ G.T + dynamics.process_cov)


def weight_shift(evaluate: LogLikelihood, belief: GaussianBelief, dynamics: Dynamics,
                 reference: np.ndarray) -> float:
    """Largest finite log f~ over the reference draws mapped through the predicted Gaussian."""
    values = np.asarray(evaluate(_predicted_belief(belief, dynamics).transform(reference)), dtype=float)
    values = values[np.isfinite(values)]
    return float(values.max()) if values.size else 0.0


def _nonnormalized_weights(log_values: np.ndarray, shift: float, k: int) -> np.ndarray:
    lv = np.asarray(log_values, dtype=float) - shift
    lv = np.where(np.isnan(lv), -np.inf, lv)
    top = np.max(lv, initial=-np.inf)
    if top > MAX_LOG_WEIGHT:
        logger.warning("sensor %d: log-weights up to %.1f clipped at %.0f", k, top, MAX_LOG_WEIGHT)
        lv = np.minimum(lv, MAX_LOG_WEIGHT)
    return np.exp(lv)


def rlcdgpf_step(beliefs: Sequence[GaussianBelief], sub_particles: int, measurements: np.ndarray,
                 lc: LikelihoodConsensus, moment_summer: Summer, dynamics: Dynamics,
                 rngs: Sequence[np.random.Generator],
                 reference: np.ndarray) -> tuple[list[GaussianBelief], np.ndarray, bool, list]:
    """J' particles per sensor, LC, partial moments, second consensus stage, global (mu, C).

    reference holds standard-normal rows common to all sensors (see weight_shift).
    Also returns the per-sensor (particles, nonnormalized weights) pairs.
    """
    K = lc.K
    predicted = [propagate(ParticleSet.uniform(b.sample(sub_particles, rng)), dynamics, rng)
                 for b, rng in zip(beliefs, rngs)]
    stats = lc.run(_as_measurements(measurements, K), [p.particles for p in predicted])

    weighted = []
    for k, (pred, stat, belief) in enumerate(zip(predicted, stats, beliefs)):
        evaluate = lc.log_jlf(stat)
        shift = weight_shift(evaluate, belief, dynamics, reference)
        weighted.append((pred.particles, _nonnormalized_weights(evaluate(pred.particles), shift, k)))

    dim = predicted[0].dim
    partial = np.stack([PartialMoments.from_weighted(x, w).payload() for x, w in weighted])
    sums = moment_summer(partial, "moments")

    post, lost = [], False
    for k in range(K):
        try:
            b = PartialMoments.from_payload(sums[k], dim).belief().repaired()
        except FilterDivergence as e:
            logger.warning("sensor %d: %s; falling back to predicted moments", k, e)
            b = gaussian_moments(predicted[k]).repaired()
            lost = True
        post.append(b)
    return post, np.stack([b.mean for b in post]), lost, weighted


class _DistributedBase:
    name = ""

    def __init__(self, dynamics: Dynamics, lc: LikelihoodConsensus, n_particles: int, seed: int,
                 *, shared_streams: bool = False):
        if n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        self.dynamics = dynamics
        self.lc = lc
        self.J = int(n_particles)
        self.seed = int(seed)
        self.shared_streams = bool(shared_streams)
        self.diverged = False

    @property
    def K(self) -> int:
        return self.lc.K

    def _rngs(self, n: int) -> list[np.random.Generator]:
        return [_sensor_rng(self.seed, k, n, self.shared_streams) for k in range(self.K)]


class LcDpf(_DistributedBase):
    name = "LC-DPF"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.particle_sets: list[ParticleSet] = []

    def initialize(self, prior: GaussianBelief) -> None:
        self.particle_sets = [
            ParticleSet.uniform(prior.sample(self.J, stream_rng(self.seed, STREAM_INIT, 0 if self.shared_streams else k, 0)))
            for k in range(self.K)
        ]
        self.diverged = False

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray:
        if not self.particle_sets:
            raise RuntimeError("initialize() must be called before step()")
        self.particle_sets, est, lost = lcdpf_step(self.particle_sets, measurements, self.lc, self.dynamics, self._rngs(n))
        self.diverged |= lost
        return est


class LcDgpf(_DistributedBase):
    name = "LC-DGPF"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.beliefs: list[GaussianBelief] = []

    def initialize(self, prior: GaussianBelief) -> None:
        self.beliefs = [prior.repaired() for _ in range(self.K)]
        self.diverged = False

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray:
        if not self.beliefs:
            raise RuntimeError("initialize() must be called before step()")
        self.beliefs, est, lost = lcdgpf_step(self.beliefs, self.J, measurements, self.lc, self.dynamics, self._rngs(n))
        self.diverged |= lost
        return est


class RLcDgpf(_DistributedBase):
    """n_particles is the total J; each sensor runs J' = J / K."""
    name = "R-LC-DGPF"

    def __init__(self, dynamics: Dynamics, lc: LikelihoodConsensus, n_particles: int, seed: int,
                 *, moment_summer: Summer | None = None, shared_streams: bool = False):
        super().__init__(dynamics, lc, n_particles, seed, shared_streams=shared_streams)
        self.sub_particles = check_particle_budget(self.J, lc)
        self.moment_summer = moment_summer if moment_summer is not None else lc.summer
        self.beliefs: list[GaussianBelief] = []
        self.last_weighted: list = []

    def initialize(self, prior: GaussianBelief) -> None:
        self.beliefs = [prior.repaired() for _ in range(self.K)]
        self.diverged = False

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray:
        if not self.beliefs:
            raise RuntimeError("initialize() must be called before step()")
        self.beliefs, est, lost, self.last_weighted = rlcdgpf_step(
            self.beliefs, self.sub_particles, measurements, self.lc, self.moment_summer, self.dynamics, self._rngs(n),
            self._reference(n))
        self.diverged |= lost
        return est

    def _reference(self, n: int) -> np.ndarray:
        dim = self.dynamics.G.shape[0]
        return stream_rng(self.seed, STREAM_SHIFT, 0, n).standard_normal((self.J, dim))


def check_particle_budget(n_particles: int, lc: LikelihoodConsensus) -> int:
    """J' = J / K; J must split evenly and J' must cover the LS fits."""
    if n_particles % lc.K:
        raise ParticleBudgetError(f"J={n_particles} is not a multiple of K={lc.K}")
    sub = n_particles // lc.K
    need = lc.min_fit_points()
    if sub < need:
        raise ParticleBudgetError(f"J'={sub} particles per sensor cannot fit {need} basis coefficients")
    return sub
