"""
Scenario and experiment configuration.

This module provides:
  - Method: the five trackers (stringy enum values match the CLI names)
  - ScenarioConfig: targets, dynamics, acoustic sensors, prior, network
  - FilterConfig: particle counts, LC basis and consensus settings
  - ExperimentConfig: scenario + filter + Monte Carlo / output settings
  - reference_config, n_consensus_lc
  - load_experiment_config / save_experiment_config (JSON)

Notes
  - from_dict() overrides defaults key by key; unknown keys raise ConfigError
    naming the key, so typos in a config file never pass silently.
  - Matrices are stored as nested lists in JSON.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


class Method(str, enum.Enum):
    CPF = "CPF"
    CGPF = "CGPF"
    LC_DPF = "LC-DPF"
    LC_DGPF = "LC-DGPF"
    R_LC_DGPF = "R-LC-DGPF"

    @property
    def distributed(self) -> bool:
        return self not in (Method.CPF, Method.CGPF)

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = str(name).strip().upper().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ConfigError(f"unknown method {name!r} (choose from {', '.join(m.value for m in cls)})")


def _reference_G() -> list[list[float]]:
    return [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]


def _reference_W() -> list[list[float]]:
    return [[0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]]


@dataclass
class ScenarioConfig:
    """Two targets, 25 acoustic sensors on a jittered grid over 40 m x 40 m."""
    n_targets: int = 2
    G_p: list[list[float]] = field(default_factory=_reference_G)
    W_p: list[list[float]] = field(default_factory=_reference_W)
    sigma_u2: float = 0.00035
    amplitudes: list[float] = field(default_factory=lambda: [10.0, 10.0])
    kappa: float = 1.0          # path-loss exponent
    sigma_v2: float = 0.05      # measurement noise variance
    d_min: float = 0.1          # distance clamp (m)
    prior_means: list[list[float]] = field(default_factory=lambda: [[36.0, 36.0, -0.05, -0.05], [4.0, 4.0, 0.05, 0.05]])
    prior_cov_diag: list[float] = field(default_factory=lambda: [1.0, 1.0, 0.001, 0.001])
    fixed_x0: bool = False      # truth starts at the prior means instead of a prior draw
    confine_truth: bool = True  # redraw truth trajectories that leave the field
    n_sensors: int = 25
    area: float = 40.0          # side length (m)
    comm_range: float = 18.0    # m
    jitter: float = 0.25        # fraction of the grid cell
    n_steps: int = 200

    def validate(self) -> None:
        if self.n_targets < 1:
            raise ConfigError("n_targets must be >= 1")
        if len(self.amplitudes) != self.n_targets or len(self.prior_means) != self.n_targets:
            raise ConfigError("amplitudes and prior_means need one entry per target")
        if any(a <= 0 for a in self.amplitudes):
            raise ConfigError("amplitudes must be positive")
        for name in ("kappa", "sigma_v2", "d_min", "area", "comm_range"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.sigma_u2 < 0:
            raise ConfigError("sigma_u2 must be nonnegative")
        if any(v < 0 for v in self.prior_cov_diag) or len(self.prior_cov_diag) != 4:
            raise ConfigError("prior_cov_diag needs 4 nonnegative entries")
        side = math.isqrt(self.n_sensors)
        if self.n_sensors < 1 or side * side != self.n_sensors:
            raise ConfigError(f"n_sensors={self.n_sensors} must be a perfect square")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")

    @property
    def state_dim(self) -> int:
        return 4 * self.n_targets

    @property
    def position_dim(self) -> int:
        return 2 * self.n_targets


@dataclass
class FilterConfig:
    method: str = Method.LC_DPF.value
    n_particles: int = 5000         # J (R-LC-DGPF: total over sensors, J' = J / K)
    degree: int = 2                 # R_p
    iterations: int = 8             # I
    tol: float | None = None        # stop consensus early once the update is below tol
    exact_sums: bool = False
    gamma: str = "indirect"         # "indirect" | "direct"
    statistic: str = "polynomial"   # "polynomial" | "general"
    scaled_frame: bool = True       # basis on (x - area/2) / (area/2)

    def validate(self) -> None:
        Method.parse(self.method)
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if self.degree < 0:
            raise ConfigError("degree must be >= 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.gamma not in ("indirect", "direct"):
            raise ConfigError(f"gamma must be 'indirect' or 'direct' (got {self.gamma!r})")
        if self.statistic not in ("polynomial", "general"):
            raise ConfigError(f"statistic must be 'polynomial' or 'general' (got {self.statistic!r})")

    @property
    def method_enum(self) -> Method:
        return Method.parse(self.method)


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    runs: int = 100
    seed: int = 0
    workers: int = 1
    track_loss_threshold: float = 5.0   # m
    out_dir: str | None = None
    topology_path: str | None = None
    save_trajectory: bool = False

    def validate(self) -> None:
        self.scenario.validate()
        self.filter.validate()
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.track_loss_threshold <= 0:
            raise ConfigError("track_loss_threshold must be positive")
        if self.filter.method_enum is Method.R_LC_DGPF:
            K = self.scenario.n_sensors
            if self.filter.n_particles % K:
                raise ConfigError(f"R-LC-DGPF needs J divisible by K (J={self.filter.n_particles}, K={K})")
            sub = self.filter.n_particles // K
            R_a = math.comb(self.filter.degree + self.scenario.position_dim, self.scenario.position_dim)
            R_d = math.comb(2 * self.filter.degree + self.scenario.position_dim, self.scenario.position_dim)
            need = R_d if self.filter.gamma == "direct" else R_a
            if sub < need:
                raise ConfigError(f"R-LC-DGPF needs J/K >= {need} particles per sensor (got {sub})")

    def with_method(self, method: Method | str, **filter_overrides: Any) -> "ExperimentConfig":
        m = Method.parse(method.value if isinstance(method, Method) else method)
        return replace(self, filter=replace(self.filter, method=m.value, **filter_overrides))

    # ---- dict / JSON ----

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["version"] = CONFIG_VERSION
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        ver = int(doc.pop("version", CONFIG_VERSION))
        if ver != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {ver}")
        scen = _overlay(ScenarioConfig(), doc.pop("scenario", {}) or {}, "scenario")
        filt = _overlay(FilterConfig(), doc.pop("filter", {}) or {}, "filter")
        cfg = _overlay(cls(scenario=scen, filter=filt), doc, "experiment")
        cfg.validate()
        return cfg


def _overlay(base: Any, values: dict, where: str) -> Any:
    if not isinstance(values, dict):
        raise ConfigError(f"{where} section must be an object")
    known = {f.name for f in fields(base)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown {where} key {key!r}")
    return replace(base, **values)


def reference_config() -> ExperimentConfig:
    """Tracking scenario with the reference parameter set (J = 5000, I = 8, R_p = 2)."""
    return ExperimentConfig()


def n_consensus_lc(degree: int, dim: int) -> int:
    """N_c = C(2 R_p + M, M) - 1 for the polynomial statistic."""
    return math.comb(2 * degree + dim, dim) - 1


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config not found: {p}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return ExperimentConfig.from_dict(doc)


def save_experiment_config(cfg: ExperimentConfig, path: Path | str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    return p
