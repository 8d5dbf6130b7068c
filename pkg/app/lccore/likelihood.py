"""
LC core: exponential-family local likelihoods and the approximate JLF statistic.

A local likelihood in the exponential family reads
    f(z|x) = c(z) exp(a(x)^T b(z) - d(x)).
Approximating a and d on fixed bases makes the log-JLF a linear combination
of basis functions whose coefficients are sums over sensors; those sums are
what likelihood consensus computes.

This module provides:
  - ExpFamilyLocalModel: protocol for a(x), b(z), log_c(z), d(x)
  - GaussianMeasurementModel: z = h(x) + v, v ~ N(0, Q)
  - CallableExpFamilyModel: exp-family model assembled from plain callables
  - JlfStatistic: the sufficient statistic (polynomial-Gaussian or general)
  - fit_alpha / gamma_direct / gamma_indirect_gaussian / local_beta
  - sum_local_statistics / eval_log_jlf / exact_sufficient_statistic /
    log_norm_const, plus consensus payload helpers

Everything is computed in the log domain.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol, Sequence, runtime_checkable

import numpy as np
import scipy.linalg

from .basis import (
    BasisError,
    BasisExpansion,
    DimensionMismatch,
    PolynomialBasis,
    add_indices,
    evaluate_basis,
    ls_fit,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]


class LayoutMismatch(BasisError):
    """Sensors disagree on basis layout or statistic length."""


@runtime_checkable
class ExpFamilyLocalModel(Protocol):
    q: int

    def a(self, x: np.ndarray) -> np.ndarray: ...     # (J, M_state) -> (J, q)
    def b(self, z: np.ndarray) -> np.ndarray: ...     # (N,) -> (q,)
    def log_c(self, z: np.ndarray) -> float: ...
    def d(self, x: np.ndarray) -> np.ndarray: ...     # (J, M_state) -> (J,)


def _as_points(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _as_columns(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.reshape(n, -1)


@dataclass(frozen=True, eq=False)
class GaussianMeasurementModel:
    """z = h(x) + v with v ~ N(0, Q).

    h maps states (J, M_state) to (J, N) (or (J,) when N == 1). In
    exponential-family form: a = h, b = Q^{-1} z, d = 1/2 h^T Q^{-1} h.
    """
    h: ArrayFn
    Q: np.ndarray = field(repr=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise ValueError("noise covariance must be square and symmetric")
        try:
            chol = scipy.linalg.cho_factor(Q, lower=True)
        except np.linalg.LinAlgError as e:
            raise ValueError("noise covariance must be positive definite") from e
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_Q_inv", scipy.linalg.cho_solve(chol, np.eye(Q.shape[0])))
        object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(chol[0])))))

    @property
    def q(self) -> int:
        return int(self.Q.shape[0])

    @property
    def Q_inv(self) -> np.ndarray:
        return self._Q_inv

    def mean(self, x: np.ndarray) -> np.ndarray:
        pts = _as_points(x)
        return _as_columns(self.h(pts), pts.shape[0])

    def a(self, x: np.ndarray) -> np.ndarray:
        return self.mean(x)

    def b(self, z: np.ndarray) -> np.ndarray:
        return self._Q_inv @ np.atleast_1d(np.asarray(z, dtype=float))

    def log_c(self, z: np.ndarray) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return -0.5 * (self.q * math.log(2.0 * math.pi) + self._logdet + float(z @ self._Q_inv @ z))

    def d(self, x: np.ndarray) -> np.ndarray:
        hx = self.mean(x)
        return 0.5 * np.add.reduce(hx[:, :, None] * self._Q_inv * hx[:, None, :], axis=(1, 2))

    def log_likelihood(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Explicit Gaussian log density log N(z; h(x), Q) for each state row."""
        r = np.atleast_1d(np.asarray(z, dtype=float))[None, :] - self.mean(x)
        sol = scipy.linalg.cho_solve(self._chol, r.T)
        return -0.5 * (self.q * math.log(2.0 * math.pi) + self._logdet + np.sum(r.T * sol, axis=0))


@dataclass(frozen=True, eq=False)
class CallableExpFamilyModel:
    """Exponential-family local model from user callables a, b, log_c, d."""
    q: int
    a_fn: ArrayFn
    b_fn: ArrayFn
    log_c_fn: Callable[[np.ndarray], float]
    d_fn: ArrayFn

    def a(self, x):
        pts = _as_points(x)
        return _as_columns(self.a_fn(pts), pts.shape[0])

    def b(self, z):
        return np.atleast_1d(np.asarray(self.b_fn(z), dtype=float))

    def log_c(self, z):
        return float(self.log_c_fn(z))

    def d(self, x):
        return np.asarray(self.d_fn(_as_points(x)), dtype=float).reshape(-1)

    def log_likelihood(self, z, x):
        return self.log_c(z) + self.a(x) @ self.b(z) - self.d(x)


def _basis_points(points: np.ndarray, select: Sequence[int] | None) -> np.ndarray:
    pts = _as_points(points)
    return pts if select is None else pts[:, list(select)]


def fit_alpha(model: ExpFamilyLocalModel, basis: PolynomialBasis, state_points: np.ndarray,
              *, select: Sequence[int] | None = None, ridge: bool = True) -> BasisExpansion:
    """LS coefficients alpha of a(x) on the phi basis (h(x) for the Gaussian model).

    select picks the state coordinates the basis is defined on.
    """
    pts = _as_points(state_points)
    return ls_fit(basis, _basis_points(pts, select), model.a(pts), ridge=ridge)


def gamma_direct(model: ExpFamilyLocalModel, psi_basis: PolynomialBasis, state_points: np.ndarray,
                 *, select: Sequence[int] | None = None, ridge: bool = True) -> BasisExpansion:
    """LS coefficients gamma of d(x) on the psi basis."""
    pts = _as_points(state_points)
    return ls_fit(psi_basis, _basis_points(pts, select), model.d(pts), ridge=ridge)


@functools.lru_cache(maxsize=64)
def product_positions(phi: PolynomialBasis, psi: PolynomialBasis) -> np.ndarray:
    """(R_a, R_a) table: row in psi of r' + r'' for every pair of phi indices."""
    if phi.dim != psi.dim or psi.degree < 2 * phi.degree or phi.offset != psi.offset or phi.scale != psi.scale:
        raise LayoutMismatch("psi basis must share variables and frame with phi and have twice its degree")
    n = len(phi)
    out = np.empty((n, n), dtype=np.int64)
    for i, ri in enumerate(phi.indices):
        for j in range(i, n):
            out[i, j] = out[j, i] = psi.position(add_indices(ri, phi.indices[j]))
    return out


@functools.lru_cache(maxsize=64)
def embedding_rows(phi: PolynomialBasis, psi: PolynomialBasis) -> np.ndarray:
    """Row in psi of every phi index (phi must be a sub-basis of psi)."""
    try:
        return np.array([psi.position(r) for r in phi.indices], dtype=np.int64)
    except KeyError as e:
        raise LayoutMismatch(f"phi index {e} is not in the psi basis") from None


def gamma_indirect_gaussian(alpha: BasisExpansion, Q_inv: np.ndarray,
                            psi_basis: PolynomialBasis | None = None) -> BasisExpansion:
    """gamma from alpha by substitution: d~(x) = 1/2 a~(x)^T Q^{-1} a~(x).

    gamma_r = 1/2 sum_{r' + r'' = r} alpha_{r'}^T Q^{-1} alpha_{r''} over |r| <= 2 R_p.
    """
    phi = alpha.basis
    psi = psi_basis if psi_basis is not None else phi.with_degree(2 * phi.degree)
    Q_inv = np.atleast_2d(np.asarray(Q_inv, dtype=float))
    if Q_inv.shape != (alpha.q, alpha.q):
        raise DimensionMismatch(f"Q^-1 of shape {Q_inv.shape} does not match q={alpha.q}")
    gram = alpha.coeffs @ Q_inv @ alpha.coeffs.T
    gamma = np.zeros(len(psi))
    np.add.at(gamma, product_positions(phi, psi).ravel(), 0.5 * gram.ravel())
    return BasisExpansion(psi, gamma)


def local_beta(z: np.ndarray, alpha: BasisExpansion, gamma: BasisExpansion,
               b_fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """beta_r = alpha_r^T b(z) - gamma_r for |r| <= R_p, -gamma_r above, over the psi basis."""
    if gamma.q != 1:
        raise DimensionMismatch("gamma must be scalar-valued")
    bz = np.atleast_1d(np.asarray(b_fn(z), dtype=float))
    if bz.shape[0] != alpha.q:
        raise DimensionMismatch(f"b(z) has length {bz.shape[0]}, alpha has q={alpha.q}")
    rows = embedding_rows(alpha.basis, gamma.basis)
    beta = -gamma.coeffs[:, 0].copy()
    beta[rows] += alpha.coeffs @ bz
    return beta


Variant = Literal["polynomial", "general"]


@dataclass(frozen=True, eq=False)
class JlfStatistic:
    """Sufficient statistic of the approximate JLF.

    polynomial: coeffs holds B_r for all psi indices except the constant one
                (length C(2R_p+M, 2R_p) - 1); constant holds B_0.
    general:    coeffs holds (A_1..A_{R_a}, Gamma_1..Gamma_{R_d}).
    """
    variant: Variant
    psi: PolynomialBasis
    coeffs: np.ndarray = field(repr=False)
    phi: PolynomialBasis | None = None
    constant: float = 0.0
    log_norm: float | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != self.expected_size():
            raise LayoutMismatch(f"{self.variant} statistic needs {self.expected_size()} coefficients, got {c.shape[0]}")
        object.__setattr__(self, "coeffs", c)

    def expected_size(self) -> int:
        if self.variant == "polynomial":
            return len(self.psi) - 1
        if self.phi is None:
            raise LayoutMismatch("general statistic requires a phi basis")
        return len(self.phi) + len(self.psi)

    @classmethod
    def from_beta(cls, psi: PolynomialBasis, beta: np.ndarray, log_norm: float | None = None) -> "JlfStatistic":
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape[0] != len(psi):
            raise LayoutMismatch(f"beta of length {beta.shape[0]} for psi basis of size {len(psi)}")
        return cls("polynomial", psi, beta[1:], constant=float(beta[0]), log_norm=log_norm)

    @classmethod
    def general(cls, phi: PolynomialBasis, A: np.ndarray, psi: PolynomialBasis, Gamma: np.ndarray,
                log_norm: float | None = None) -> "JlfStatistic":
        return cls("general", psi, np.concatenate([np.ravel(A), np.ravel(Gamma)]), phi=phi, log_norm=log_norm)

    @property
    def size(self) -> int:
        return int(self.coeffs.shape[0])

    def same_layout(self, other: "JlfStatistic") -> bool:
        if self.variant != other.variant or not self.psi.same_layout(other.psi):
            return False
        if self.variant == "general":
            return other.phi is not None and self.phi.same_layout(other.phi)
        return True

    def payload(self) -> np.ndarray:
        """The N_c numbers exchanged by consensus (B_0 stays local)."""
        return self.coeffs.copy()

    def with_payload(self, values: np.ndarray) -> "JlfStatistic":
        return JlfStatistic(self.variant, self.psi, np.asarray(values, dtype=float),
                            phi=self.phi, constant=self.constant, log_norm=self.log_norm)


def sum_local_statistics(stats: Sequence[JlfStatistic]) -> JlfStatistic:
    """Exact elementwise sums over sensors (the oracle for the consensus path)."""
    if not stats:
        raise LayoutMismatch("no local statistics to sum")
    first = stats[0]
    for s in stats[1:]:
        if not first.same_layout(s):
            raise LayoutMismatch("local statistics use different basis layouts")
    norms = [s.log_norm for s in stats]
    return JlfStatistic(
        first.variant,
        first.psi,
        np.sum([s.coeffs for s in stats], axis=0),
        phi=first.phi,
        constant=float(sum(s.constant for s in stats)),
        log_norm=None if any(v is None for v in norms) else log_norm_const(norms),
    )


def eval_log_jlf(stat: JlfStatistic, x: np.ndarray) -> np.ndarray | float:
    """log of the approximate JLF up to an x-independent constant.

    x holds the basis variables only: (M,) -> float, (J, M) -> (J,).
    """
    x = np.asarray(x, dtype=float)
    if stat.variant == "polynomial":
        val = evaluate_basis(stat.psi, x)[..., 1:] @ stat.coeffs
    else:
        n_a = len(stat.phi)
        val = evaluate_basis(stat.phi, x) @ stat.coeffs[:n_a] - evaluate_basis(stat.psi, x) @ stat.coeffs[n_a:]
    return float(val) if np.ndim(val) == 0 else val


def local_general_terms(model: ExpFamilyLocalModel, z: np.ndarray, alpha: BasisExpansion,
                        gamma: BasisExpansion) -> JlfStatistic:
    """Per-sensor general statistic: (alpha_r^T b(z))_r and (gamma_r)_r."""
    return JlfStatistic.general(alpha.basis, alpha.coeffs @ model.b(z), gamma.basis, gamma.coeffs[:, 0],
                                log_norm=model.log_c(z))


def exp_family_eta(alpha: BasisExpansion, gamma: BasisExpansion,
                   b_fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Statistic summand eta(z) = (alpha_r^T b(z), -gamma_r) of one sensor."""
    neg_gamma = -gamma.coeffs[:, 0]

    def eta(z):
        return np.concatenate([alpha.coeffs @ np.atleast_1d(b_fn(z)), neg_gamma])
    return eta


def exact_sufficient_statistic(etas: Sequence[Callable[[np.ndarray], np.ndarray]],
                               measurements: Sequence[np.ndarray]) -> np.ndarray:
    """t_p = sum_k eta_{k,p}(z_k)."""
    if len(etas) != len(measurements):
        raise LayoutMismatch(f"{len(etas)} summand functions for {len(measurements)} measurements")
    terms = [np.atleast_1d(np.asarray(eta(z), dtype=float)) for eta, z in zip(etas, measurements)]
    if any(t.shape != terms[0].shape for t in terms):
        raise LayoutMismatch("sensors disagree on the statistic length")
    return np.sum(terms, axis=0)


def log_norm_const(values: Sequence[float]) -> float:
    """log C_n = sum_k log c_k(z_k)."""
    return float(math.fsum(float(v) for v in values))


def consensus_payload(stat: JlfStatistic) -> np.ndarray:
    """Flat N_c vector a sensor feeds into consensus."""
    return stat.payload()


def statistic_from_payload(template: JlfStatistic, values: np.ndarray) -> JlfStatistic:
    """Rebuild a statistic with template's layout from consensus output."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape[0] != template.size:
        raise LayoutMismatch(f"payload of length {v.shape[0]} for a statistic of size {template.size}")
    return template.with_payload(v)


def payload_size(phi: PolynomialBasis, psi: PolynomialBasis, variant: Variant = "polynomial") -> int:
    """N_c: |psi| - 1 for the polynomial statistic, R_a + R_d for the general one."""
    return len(psi) - 1 if variant == "polynomial" else len(phi) + len(psi)
