"""
LC core: multi-index bookkeeping, monomial bases and least-squares fitting.

This module provides:
  - MultiIndex: exponent tuple (r_1..r_M) of a multivariate monomial
  - PolynomialBasis: all monomials of total degree <= R in M variables, in
    graded lexicographic order, evaluated on an affine frame (x - offset)/scale
  - BasisExpansion: coefficient matrix of a vector-valued function on a basis
  - enumerate_multi_indices / evaluate_basis / ls_fit / add_indices

Notes
  - Ordering is by total degree, then by exponents in descending lexicographic
    order, so within a degree x_1 comes before x_2. Every sensor builds the
    same basis and therefore the same consensus payload layout.
  - ls_fit solves the LS problem with a pivoted QR of the design matrix. When
    the design matrix is numerically rank deficient it falls back to a ridge
    solve of the normal equations (or raises RankDeficient if disabled).
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

# Refuse to build bases larger than this many monomials.
MAX_BASIS_SIZE = 1_000_000

# Ridge fallback: lambda = RIDGE_SCALE * trace(Phi^T Phi) / R_a
RIDGE_SCALE = 1e-9


class BasisError(ValueError):
    """Base class for basis construction and fitting errors."""


class DimensionMismatch(BasisError):
    pass


class TooFewPoints(BasisError):
    pass


class RankDeficient(BasisError):
    pass


@functools.total_ordering
@dataclass(frozen=True)
class MultiIndex:
    """Exponents of one monomial x_1^{r_1} ... x_M^{r_M}."""
    exponents: tuple[int, ...]

    def __post_init__(self):
        if any(int(e) < 0 for e in self.exponents):
            raise BasisError(f"negative exponent in {self.exponents}")

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @property
    def total_degree(self) -> int:
        return sum(self.exponents)

    def sort_key(self) -> tuple:
        return (self.total_degree, tuple(-e for e in self.exponents))

    def __lt__(self, other: "MultiIndex") -> bool:
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return add_indices(self, other)


def add_indices(r1: MultiIndex, r2: MultiIndex) -> MultiIndex:
    """Componentwise sum; x^{r1} * x^{r2} = x^{r1 + r2}."""
    if r1.dim != r2.dim:
        raise DimensionMismatch(f"cannot add indices of dimension {r1.dim} and {r2.dim}")
    return MultiIndex(tuple(a + b for a, b in zip(r1.exponents, r2.exponents)))


def basis_size(dim: int, degree: int) -> int:
    """Number of monomials of total degree <= degree in dim variables: C(R+M, M)."""
    return math.comb(degree + dim, dim)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # Descending lexicographic order of all ways to write total as parts nonnegative ints.
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_multi_indices(dim: int, degree: int) -> list[MultiIndex]:
    """All multi-indices with total degree <= degree, graded lexicographic order."""
    if dim < 1:
        raise BasisError(f"dimension must be >= 1 (got {dim})")
    if degree < 0:
        raise BasisError(f"degree must be >= 0 (got {degree})")
    count = basis_size(dim, degree)
    if count > MAX_BASIS_SIZE:
        raise BasisError(f"basis with M={dim}, R={degree} has {count} monomials (limit {MAX_BASIS_SIZE})")
    out: list[MultiIndex] = []
    for d in range(degree + 1):
        out.extend(MultiIndex(c) for c in _compositions(d, dim))
    return out


@dataclass(frozen=True)
class PolynomialBasis:
    """Monomial basis of degree <= R in M variables.

    Monomials are evaluated on u = (x - offset) / scale. The default frame is
    the identity (offset 0, scale 1).
    """
    dim: int
    degree: int
    indices: tuple[MultiIndex, ...]
    offset: tuple[float, ...]
    scale: tuple[float, ...]

    @classmethod
    def create(cls, dim: int, degree: int,
               offset: Sequence[float] | None = None,
               scale: Sequence[float] | None = None) -> "PolynomialBasis":
        idx = tuple(enumerate_multi_indices(dim, degree))
        off = tuple(float(v) for v in (offset if offset is not None else [0.0] * dim))
        scl = tuple(float(v) for v in (scale if scale is not None else [1.0] * dim))
        if len(off) != dim or len(scl) != dim:
            raise DimensionMismatch("frame offset/scale must have one entry per variable")
        if any(s <= 0.0 for s in scl):
            raise BasisError("frame scale entries must be positive")
        return cls(dim=dim, degree=degree, indices=idx, offset=off, scale=scl)

    def __len__(self) -> int:
        return len(self.indices)

    @functools.cached_property
    def exponent_matrix(self) -> np.ndarray:
        return np.array([r.exponents for r in self.indices], dtype=np.int64).reshape(len(self.indices), self.dim)

    @functools.cached_property
    def _positions(self) -> dict[tuple[int, ...], int]:
        return {r.exponents: i for i, r in enumerate(self.indices)}

    def position(self, r: MultiIndex) -> int:
        """Row of r in this basis; KeyError if r has degree > R."""
        return self._positions[r.exponents]

    def with_degree(self, degree: int) -> "PolynomialBasis":
        """Same variables and frame, different maximum degree."""
        return PolynomialBasis.create(self.dim, degree, self.offset, self.scale)

    def same_layout(self, other: "PolynomialBasis") -> bool:
        return (self.dim == other.dim and self.degree == other.degree
                and self.offset == other.offset and self.scale == other.scale)


def evaluate_basis(basis: PolynomialBasis, x: np.ndarray) -> np.ndarray:
    """Evaluate all monomials at one point (M,) -> (R_a,) or at J points (J, M) -> (J, R_a)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != basis.dim:
        raise DimensionMismatch(f"expected points with {basis.dim} coordinates, got shape {x.shape}")
    u = (pts - np.asarray(basis.offset)) / np.asarray(basis.scale)
    E = basis.exponent_matrix
    # Integer powers up to the max degree, then gather per monomial.
    powers = np.ones((basis.degree + 1,) + u.shape)
    for d in range(1, basis.degree + 1):
        powers[d] = powers[d - 1] * u
    phi = np.ones((pts.shape[0], len(basis)))
    for m in range(basis.dim):
        phi *= powers[E[:, m], :, m].T
    return phi[0] if single else phi


@dataclass(frozen=True, eq=False)
class BasisExpansion:
    """Coefficients of a q-valued function on a basis; coeffs has shape (R_a, q)."""
    basis: PolynomialBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != len(self.basis):
            raise DimensionMismatch(f"{c.shape[0]} coefficient rows for a basis of size {len(self.basis)}")
        object.__setattr__(self, "coeffs", c)

    @property
    def q(self) -> int:
        return int(self.coeffs.shape[1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the expansion: (M,) -> (q,), (J, M) -> (J, q)."""
        return evaluate_basis(self.basis, x) @ self.coeffs

    def residuals(self, points: np.ndarray, targets: np.ndarray) -> np.ndarray:
        t = np.asarray(targets, dtype=float)
        return self(points) - (t[:, None] if t.ndim == 1 else t)


def ls_fit(basis: PolynomialBasis, points: np.ndarray, targets: np.ndarray, *, ridge: bool = True) -> BasisExpansion:
    """Least-squares coefficients of targets (J,) or (J, q) sampled at points (J, M).

    Minimizes sum_j ||Phi_j c - a_j||^2, i.e. c = (Phi^T Phi)^{-1} Phi^T A,
    computed through a column-pivoted QR factorization of Phi.
    """
    A = np.asarray(targets, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    phi = evaluate_basis(basis, np.atleast_2d(np.asarray(points, dtype=float)))
    J, n = phi.shape
    if A.shape[0] != J:
        raise DimensionMismatch(f"{J} points but {A.shape[0]} target rows")
    if J < n:
        raise TooFewPoints(f"{J} points cannot determine {n} coefficients")

    Q, R, perm = scipy.linalg.qr(phi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(J, n) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    if diag.size and diag[-1] > tol:
        sol = scipy.linalg.solve_triangular(R, Q.T @ A)
        coeffs = np.empty_like(sol)
        coeffs[perm] = sol
        return BasisExpansion(basis, coeffs)

    if not ridge:
        raise RankDeficient(f"design matrix has numerical rank {int(np.sum(diag > tol))} < {n}")
    gram = phi.T @ phi
    lam = RIDGE_SCALE * np.trace(gram) / n
    logger.warning("ls_fit: rank-deficient design (%d points, %d functions); ridge lambda=%.3g", J, n, lam)
    coeffs = scipy.linalg.solve(gram + lam * np.eye(n), phi.T @ A, assume_a="pos")
    return BasisExpansion(basis, coeffs)
