"""
Centralized baselines: sequential importance resampling PF (CPF) and
Gaussian PF (CGPF), run at a fusion center that sees every measurement.

Both trackers consume the full measurement vector of a time step and an
exact log-JLF factory jlf_for(z) -> (states -> log f(z|x)).
Estimates come back as a (1, M_state) array so centralized and distributed
trackers share one shape convention (rows = estimating nodes).
"""
from __future__ import annotations

import logging
from typing import Callable, Protocol

import numpy as np

from .particles import (
    Dynamics,
    FilterDivergence,
    GaussianBelief,
    LogLikelihood,
    ParticleSet,
    gaussian_moments,
    point_estimate,
    propagate,
    stream_rng,
    systematic_resample,
    weight_update,
)

logger = logging.getLogger(__name__)

# Stream tags for stream_rng(seed, tag, node, n).
STREAM_INIT = 0
STREAM_PREDICT = 1

JlfFactory = Callable[[np.ndarray], LogLikelihood]


class Tracker(Protocol):
    name: str
    diverged: bool

    def initialize(self, prior: GaussianBelief) -> None: ...

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray: ...


def _reweight(predicted: ParticleSet, log_jlf: LogLikelihood) -> tuple[ParticleSet, bool]:
    try:
        return weight_update(predicted, log_jlf), False
    except FilterDivergence as e:
        logger.warning("%s; weights reset to uniform", e)
        return ParticleSet.uniform(predicted.particles), True


def cpf_step(ps: ParticleSet, dynamics: Dynamics, log_jlf: LogLikelihood,
             rng: np.random.Generator) -> tuple[ParticleSet, np.ndarray]:
    """Resample, propagate, reweight with the exact JLF, estimate."""
    predicted = propagate(systematic_resample(ps, rng), dynamics, rng)
    updated = weight_update(predicted, log_jlf)
    return updated, point_estimate(updated)


def cgpf_step(belief: GaussianBelief, n_particles: int, dynamics: Dynamics, log_jlf: LogLikelihood,
              rng: np.random.Generator) -> tuple[GaussianBelief, np.ndarray]:
    """Sample from N(mu, C), propagate, reweight, collapse to (mu, C)."""
    drawn = ParticleSet.uniform(belief.sample(n_particles, rng))
    predicted = propagate(drawn, dynamics, rng)
    post = gaussian_moments(weight_update(predicted, log_jlf)).repaired()
    return post, post.mean


class CentralizedPF:
    name = "CPF"

    def __init__(self, dynamics: Dynamics, jlf_for: JlfFactory, n_particles: int, seed: int):
        if n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        self.dynamics = dynamics
        self.jlf_for = jlf_for
        self.J = int(n_particles)
        self.seed = int(seed)
        self.particles: ParticleSet | None = None
        self.diverged = False

    def initialize(self, prior: GaussianBelief) -> None:
        self.particles = ParticleSet.uniform(prior.sample(self.J, stream_rng(self.seed, STREAM_INIT, 0, 0)))
        self.diverged = False

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray:
        if self.particles is None:
            raise RuntimeError("initialize() must be called before step()")
        rng = stream_rng(self.seed, STREAM_PREDICT, 0, n)
        predicted = propagate(systematic_resample(self.particles, rng), self.dynamics, rng)
        self.particles, lost = _reweight(predicted, self.jlf_for(measurements))
        self.diverged |= lost
        return point_estimate(self.particles)[None, :]


class CentralizedGPF:
    name = "CGPF"

    def __init__(self, dynamics: Dynamics, jlf_for: JlfFactory, n_particles: int, seed: int):
        if n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        self.dynamics = dynamics
        self.jlf_for = jlf_for
        self.J = int(n_particles)
        self.seed = int(seed)
        self.belief: GaussianBelief | None = None
        self.diverged = False

    def initialize(self, prior: GaussianBelief) -> None:
        self.belief = prior.repaired()
        self.diverged = False

    def step(self, n: int, measurements: np.ndarray) -> np.ndarray:
        if self.belief is None:
            raise RuntimeError("initialize() must be called before step()")
        rng = stream_rng(self.seed, STREAM_PREDICT, 0, n)
        predicted = propagate(ParticleSet.uniform(self.belief.sample(self.J, rng)), self.dynamics, rng)
        updated, lost = _reweight(predicted, self.jlf_for(measurements))
        self.diverged |= lost
        self.belief = gaussian_moments(updated).repaired()
        return self.belief.mean[None, :]
