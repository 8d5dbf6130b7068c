"""
Multi-target tracking scenario: constant-velocity targets observed by
acoustic amplitude sensors.

State layout: P blocks of (x, y, vx, vy), one per target, so the position
coordinates of target p are 4p and 4p + 1. Sensor k measures
    z_k = sum_p A_p / max(||rho_p - xi_k||, d_min)^kappa + v_k,  v_k ~ N(0, sigma_v^2).
Measurements never depend on velocities, so the LC basis lives on the 2P
position coordinates only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import scipy.linalg

from ..filters import GaussianBelief, LinearDynamics
from ..lccore import GaussianMeasurementModel
from ..network import SensorNetwork
from .config import ScenarioConfig

logger = logging.getLogger(__name__)


def position_indices(n_targets: int) -> tuple[int, ...]:
    return tuple(i for p in range(n_targets) for i in (4 * p, 4 * p + 1))


@dataclass(eq=False)
class TargetDynamics(LinearDynamics):
    """Block-diagonal constant-velocity model for P targets."""
    n_targets: int = 1

    @classmethod
    def from_blocks(cls, G_p: np.ndarray, W_p: np.ndarray, sigma_u2: float, n_targets: int) -> "TargetDynamics":
        G_p = np.asarray(G_p, dtype=float)
        W_p = np.asarray(W_p, dtype=float)
        return cls(scipy.linalg.block_diag(*[G_p] * n_targets),
                   scipy.linalg.block_diag(*[W_p] * n_targets),
                   float(sigma_u2), n_targets)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "TargetDynamics":
        return cls.from_blocks(cfg.G_p, cfg.W_p, cfg.sigma_u2, cfg.n_targets)


@dataclass(frozen=True)
class AcousticModel:
    amplitudes: tuple[float, ...]
    kappa: float = 1.0
    sigma_v2: float = 0.05
    d_min: float = 0.1

    def __post_init__(self):
        if any(a <= 0 for a in self.amplitudes) or self.kappa <= 0 or self.sigma_v2 <= 0 or self.d_min <= 0:
            raise ValueError("amplitudes, kappa, sigma_v2 and d_min must be positive")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "AcousticModel":
        return cls(tuple(float(a) for a in cfg.amplitudes), cfg.kappa, cfg.sigma_v2, cfg.d_min)

    @property
    def n_targets(self) -> int:
        return len(self.amplitudes)


@dataclass(eq=False)
class PriorSpec:
    """Per-target prior means (P, 4) and one shared per-target covariance (4, 4)."""
    means: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.means.shape[1],) * 2:
            raise ValueError("prior covariance does not match the per-target state size")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "PriorSpec":
        return cls(np.asarray(cfg.prior_means, dtype=float), np.diag(cfg.prior_cov_diag))

    def belief(self) -> GaussianBelief:
        return GaussianBelief(self.means.reshape(-1), scipy.linalg.block_diag(*[self.cov] * self.means.shape[0]))


def _distances(x: np.ndarray, sensors: np.ndarray, n_targets: int) -> np.ndarray:
    # (J, K, P) target-sensor distances
    pos = x[:, list(position_indices(n_targets))].reshape(x.shape[0], n_targets, 2)
    return np.linalg.norm(pos[:, None, :, :] - sensors[None, :, None, :], axis=3)


def h_all(x: np.ndarray, sensors: np.ndarray, model: AcousticModel) -> np.ndarray:
    """Noise-free amplitudes at every sensor: (J, M_state) -> (J, K)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    sensors = np.atleast_2d(np.asarray(sensors, dtype=float))
    dist = np.maximum(_distances(pts, sensors, model.n_targets), model.d_min)
    return np.sum(np.asarray(model.amplitudes) / dist ** model.kappa, axis=2)


def h_acoustic(x: np.ndarray, xi: np.ndarray, model: AcousticModel) -> np.ndarray | float:
    """Amplitude at one sensor position xi: (M_state,) -> float, (J, M_state) -> (J,)."""
    x = np.asarray(x, dtype=float)
    val = h_all(x, np.asarray(xi, dtype=float)[None, :], model)[:, 0]
    return float(val[0]) if x.ndim == 1 else val


MAX_TRUTH_DRAWS = 1000


def simulate_truth(dynamics: TargetDynamics, prior: PriorSpec, n_steps: int, rng: np.random.Generator,
                   *, fixed_x0: bool = False, area: float | None = None,
                   max_draws: int = MAX_TRUTH_DRAWS) -> np.ndarray:
    """Trajectory of shape (n_steps + 1, M_state); row 0 is x_0, row n is x_n.

    With area, trajectories in which a target leaves [0, area]^2 are redrawn
    from rng (up to max_draws times), i.e. the truth is conditioned on staying
    inside the sensor field.
    """
    for draw in range(1, max_draws + 1):
        out = _draw_trajectory(dynamics, prior, n_steps, rng, fixed_x0)
        if area is None or _inside(out, dynamics.n_targets, area):
            if draw > 1:
                logger.debug("truth trajectory accepted after %d draws", draw)
            return out
    raise RuntimeError(f"no trajectory stayed inside the {area:g} m field in {max_draws} draws")


def _inside(traj: np.ndarray, n_targets: int, area: float) -> bool:
    pos = traj[:, list(position_indices(n_targets))]
    return bool(np.all((pos >= 0.0) & (pos <= area)))


def _draw_trajectory(dynamics: TargetDynamics, prior: PriorSpec, n_steps: int, rng: np.random.Generator,
                     fixed_x0: bool) -> np.ndarray:
    belief = prior.belief()
    x = belief.mean.copy() if fixed_x0 else belief.sample(1, rng)[0]
    out = np.empty((n_steps + 1, x.shape[0]))
    out[0] = x
    noise_sd = np.sqrt(dynamics.sigma_u2)
    for n in range(1, n_steps + 1):
        x = dynamics.G @ x
        if noise_sd > 0:
            x = x + noise_sd * (dynamics.W @ rng.standard_normal(dynamics.W.shape[1]))
        out[n] = x
    return out


def measure_all(x: np.ndarray, net: SensorNetwork, model: AcousticModel, rng: np.random.Generator) -> np.ndarray:
    """One noisy scalar measurement per sensor, (K,)."""
    clean = h_all(np.asarray(x, dtype=float)[None, :], net.positions, model)[0]
    return clean + np.sqrt(model.sigma_v2) * rng.standard_normal(net.K)


def _h_at(x: np.ndarray, xi: np.ndarray, model: AcousticModel) -> np.ndarray:
    return h_all(x, xi[None, :], model)


def sensor_models(net: SensorNetwork, model: AcousticModel) -> list[GaussianMeasurementModel]:
    """Sensor k's local model z_k = h_k(x) + v_k in exponential-family form."""
    Q = np.array([[model.sigma_v2]])
    return [GaussianMeasurementModel(partial(_h_at, xi=net.positions[k].copy(), model=model), Q)
            for k in range(net.K)]


class ExactLogJlf:
    """log f(z|x) up to a constant: -sum_k (z_k - h_k(x))^2 / (2 sigma_v^2)."""

    def __init__(self, z: np.ndarray, sensors: np.ndarray, model: AcousticModel):
        self.z = np.asarray(z, dtype=float).reshape(-1)
        self.sensors = np.asarray(sensors, dtype=float)
        self.model = model

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = self.z[None, :] - h_all(x, self.sensors, self.model)
        return -0.5 * np.sum(r * r, axis=1) / self.model.sigma_v2


def exact_log_jlf(z: np.ndarray, net: SensorNetwork, model: AcousticModel) -> ExactLogJlf:
    return ExactLogJlf(z, net.positions, model)


def jlf_factory(net: SensorNetwork, model: AcousticModel) -> partial:
    """z -> exact log-JLF evaluator, as the centralized trackers expect."""
    return partial(exact_log_jlf, net=net, model=model)
