"""
Particle and Gaussian-belief primitives shared by all filters.

This module provides:
  - ParticleSet, GaussianBelief, PartialMoments
  - LinearDynamics: x_n = G x_{n-1} + W u_n, u_n ~ N(0, sigma_u^2 I)
  - systematic_resample / propagate / weight_update / point_estimate /
    gaussian_moments
  - stream_rng: reproducible per-(sensor, step) random streams

Weights are normalized in the log domain (log-sum-exp), so a constant shift
of the log-likelihood never changes them. Weighted sums over particles are
numpy reductions in particle order (not BLAS products), so the same inputs
give the same bits in every process.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

COV_FLOOR = 1e-10

LogLikelihood = Callable[[np.ndarray], np.ndarray]


class FilterDivergence(RuntimeError):
    """Every particle received zero likelihood (all log-values -inf or NaN)."""


class ParticleBudgetError(ValueError):
    pass


@dataclass(eq=False)
class ParticleSet:
    particles: np.ndarray = field(repr=False)   # (J, M)
    weights: np.ndarray = field(repr=False)     # (J,)

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.particles.shape[0]:
            raise ValueError(f"{self.weights.shape[0]} weights for {self.particles.shape[0]} particles")

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "ParticleSet":
        p = np.atleast_2d(np.asarray(particles, dtype=float))
        return cls(p, np.full(p.shape[0], 1.0 / p.shape[0]))

    @property
    def J(self) -> int:
        return int(self.particles.shape[0])

    @property
    def dim(self) -> int:
        return int(self.particles.shape[1])


@dataclass(eq=False)
class GaussianBelief:
    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.shape[0],) * 2:
            raise ValueError(f"covariance of shape {self.cov.shape} for a mean of length {self.mean.shape[0]}")

    def repaired(self, floor: float = COV_FLOOR) -> "GaussianBelief":
        """Symmetrize and floor eigenvalues at floor."""
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise FilterDivergence("belief has non-finite mean or covariance")
        sym = 0.5 * (self.cov + self.cov.T)
        vals, vecs = scipy.linalg.eigh(sym)
        if vals.min() < floor:
            if vals.min() < -1e-8 * max(1.0, abs(vals.max())):
                logger.warning("covariance repair: smallest eigenvalue %.3g floored to %.1g", vals.min(), floor)
            sym = (vecs * np.maximum(vals, floor)) @ vecs.T
            sym = 0.5 * (sym + sym.T)
        return GaussianBelief(self.mean.copy(), sym)

    def sample(self, n: int, rng: np.random.Generator, floor: float = COV_FLOOR) -> np.ndarray:
        """n draws from N(mean, cov) after covariance repair."""
        return self.transform(rng.standard_normal((n, self.mean.shape[0])), floor)

    def transform(self, z: np.ndarray, floor: float = COV_FLOOR) -> np.ndarray:
        """Map standard-normal rows z to draws from N(mean, cov)."""
        cov = self.repaired(floor).cov
        vals, vecs = scipy.linalg.eigh(cov)
        root = vecs * np.sqrt(np.maximum(vals, 0.0))
        return self.mean + np.atleast_2d(z) @ root.T


class Dynamics(Protocol):
    G: np.ndarray
    W: np.ndarray
    sigma_u2: float


@dataclass(eq=False)
class LinearDynamics:
    """x_n = G x_{n-1} + W u_n with u_n ~ N(0, sigma_u2 I)."""
    G: np.ndarray
    W: np.ndarray
    sigma_u2: float

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.W.shape[0] != self.G.shape[0]:
            raise ValueError("G and W must have the same number of rows")

    @property
    def process_cov(self) -> np.ndarray:
        return self.sigma_u2 * self.W @ self.W.T


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, *key), e.g. key = (stream tag, sensor, step)."""
    return np.random.default_rng([int(seed), *(int(k) for k in key)])


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """J draws with replacement (systematic scheme), returned with uniform weights."""
    w = ps.weights
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise FilterDivergence("cannot resample: all particle weights are zero")
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    positions = (rng.random() + np.arange(ps.J)) / ps.J
    picks = np.searchsorted(cdf, positions, side="right")
    return ParticleSet.uniform(ps.particles[np.minimum(picks, ps.J - 1)])


def propagate(ps: ParticleSet, dynamics: Dynamics, rng: np.random.Generator) -> ParticleSet:
    """Draw x_n ~ N(G x, sigma_u^2 W W^T) for every particle; weights are carried over."""
    x = ps.particles @ dynamics.G.T
    if dynamics.sigma_u2 > 0.0:
        u = rng.standard_normal((ps.J, dynamics.W.shape[1]))
        x = x + np.sqrt(dynamics.sigma_u2) * (u @ dynamics.W.T)
    return ParticleSet(x, ps.weights.copy())


def normalized_log_weights(log_values: np.ndarray) -> np.ndarray:
    lv = np.asarray(log_values, dtype=float).reshape(-1)
    lv = np.where(np.isnan(lv), -np.inf, lv)
    if not np.any(np.isfinite(lv)) or np.max(lv) == np.inf:
        raise FilterDivergence("likelihood is zero (or non-finite) at every particle")
    return lv - logsumexp(lv)


def weight_update(predicted: ParticleSet, log_jlf: LogLikelihood) -> ParticleSet:
    """w_j proportional to exp(log_jlf(x_j)), normalized in the log domain."""
    lw = normalized_log_weights(log_jlf(predicted.particles))
    w = np.exp(lw)
    return ParticleSet(predicted.particles, w / w.sum())


def weighted_sum(particles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_j w_j x_j as a C-ordered reduction over particles."""
    return np.add.reduce(np.ascontiguousarray(weights[:, None] * particles), axis=0)


def weighted_outer_sum(particles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_j w_j x_j x_j^T as a C-ordered reduction over particles."""
    terms = weights[:, None, None] * particles[:, :, None] * particles[:, None, :]
    return np.add.reduce(np.ascontiguousarray(terms), axis=0)


def point_estimate(ps: ParticleSet) -> np.ndarray:
    """Weighted sample mean sum_j w_j x_j."""
    return weighted_sum(ps.particles, ps.weights)


def gaussian_moments(ps: ParticleSet) -> GaussianBelief:
    """mu = sum w x, C = sum w x x^T - mu mu^T."""
    mu = point_estimate(ps)
    second = weighted_outer_sum(ps.particles, ps.weights)
    return GaussianBelief(mu, second - np.outer(mu, mu))


@dataclass(eq=False)
class PartialMoments:
    """Nonnormalized mean mu' = sum w x, correlation R' = sum w x x^T and weight sum W."""
    mu: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    W: float

    @classmethod
    def from_weighted(cls, particles: np.ndarray, weights: np.ndarray) -> "PartialMoments":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("partial moments need nonnegative weights")
        x = np.atleast_2d(particles)
        return cls(weighted_sum(x, w), weighted_outer_sum(x, w), float(w.sum()))

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])

    @staticmethod
    def payload_size(dim: int) -> int:
        """N_c' = M + M(M+1)/2 + 1 scalars per sensor."""
        return dim + dim * (dim + 1) // 2 + 1

    def payload(self) -> np.ndarray:
        iu = np.triu_indices(self.dim)
        return np.concatenate([self.mu, self.R[iu], [self.W]])

    @classmethod
    def from_payload(cls, values: np.ndarray, dim: int) -> "PartialMoments":
        v = np.asarray(values, dtype=float)
        if v.shape[0] != cls.payload_size(dim):
            raise ValueError(f"payload of length {v.shape[0]} for state dimension {dim}")
        iu = np.triu_indices(dim)
        R = np.zeros((dim, dim))
        R[iu] = v[dim:-1]
        R = R + np.triu(R, 1).T
        return cls(v[:dim].copy(), R, float(v[-1]))

    def belief(self) -> GaussianBelief:
        """mu = mu' / W, C = R' / W - mu mu^T."""
        if not np.isfinite(self.W) or self.W <= 0.0:
            raise FilterDivergence("global weight sum is not positive")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.R))):
            raise FilterDivergence("partial moments are not finite")
        mu = self.mu / self.W
        return GaussianBelief(mu, self.R / self.W - np.outer(mu, mu))
