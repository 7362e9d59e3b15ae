"""Shared domain types and dense matrix utilities on the orthogonal group."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

ORTHO_TOL = 1e-8
DRIFT_TOL = 1e-10
COMPACT_RTOL = 1e-10


class ConfigError(ValueError):
    """Invalid dimensions, parameters or configuration."""


class ContractError(ValueError):
    """An input violates a documented precondition."""


class SingularityError(np.linalg.LinAlgError):
    """A matrix is too close to singular for the requested operation."""


class NumericalError(FloatingPointError):
    """A NaN or Inf showed up in an objective value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RealizationSet:
    """S realizations of an M x N data matrix.

    Parameters
    ----------
    data : ndarray, shape (S, M, N)
        Stacked realizations ``Y^(s)``.
    meta : dict
        Free-form framing metadata (frame length, hop, sampling rate...).
    """

    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ConfigError("realizations must be a stack of 2-D matrices")
        S, M, N = data.shape
        if S < 1 or M < 2 or N < 1:
            raise ConfigError(f"invalid dims S={S}, M={M}, N={N}")
        object.__setattr__(self, "data", data)

    @property
    def S(self):
        return self.data.shape[0]

    @property
    def M(self):
        return self.data.shape[1]

    @property
    def N(self):
        return self.data.shape[2]

    @cached_property
    def wide(self):
        """All realizations side by side, shape (M, S*N), column ``s*N + n``."""
        return np.ascontiguousarray(self.data.transpose(1, 0, 2).reshape(self.M, -1))

    @cached_property
    def gram(self):
        """Per-column empirical covariances without shrinkage, shape (N, M, M)."""
        Yt = self.data.transpose(2, 1, 0)
        return Yt @ Yt.transpose(0, 2, 1) / self.S

    @cached_property
    def compact(self):
        """Equivalent set with as few realizations as the data rank allows.

        Every quantity in this package depends on the data only through
        :attr:`gram`. Per column, ``Y_n = U s V^T`` gives ``Sigma_n = Z Z^T``
        with ``Z = U s / sqrt(S)``; the r leading columns of Z (r the largest
        rank over n, at relative level 1e-10), scaled by ``sqrt(r)``, form r realizations with
        the same covariances. Returns ``self`` when nothing is gained.
        """
        if self.S == 1:
            return self
        U, s, _ = np.linalg.svd(self.data.transpose(2, 1, 0), full_matrices=False)
        # singular values below 1e-10 of the column's largest carry < 1e-20 of its energy
        tol = s[:, :1] * COMPACT_RTOL
        r = max(int((s > tol).sum(axis=1).max()), 1)
        if r >= self.S:
            return self
        Z = U[:, :, :r] * (s[:, None, :r] * math.sqrt(r / self.S))
        return RealizationSet(Z.transpose(2, 1, 0), meta=dict(self.meta, compacted_from=self.S))


@dataclass(frozen=True, eq=False)
class NmfFactors:
    """Nonnegative pair (W, H) with unit l1 columns in W."""

    W: np.ndarray
    H: np.ndarray

    @property
    def K(self):
        return self.W.shape[1]

    def product(self):
        return self.W @ self.H

    def check(self, tol=1e-12):
        """Raise ContractError unless the pair lies in the feasible set."""
        W, H = self.W, self.H
        if W.ndim != 2 or H.ndim != 2 or W.shape[1] != H.shape[0]:
            raise ContractError(f"incompatible factor shapes {W.shape}, {H.shape}")
        if (W < 0).any() or (H < 0).any():
            raise ContractError("factors must be nonnegative")
        if not np.all(np.abs(W.sum(axis=0) - 1.0) <= tol):
            raise ContractError("columns of W must sum to one")
        return self


@dataclass(frozen=True, eq=False)
class CovarianceStack:
    """Shrunk empirical covariances ``Sigma_{n,S} + eps0 I``, shape (N, M, M)."""

    sigmas: np.ndarray
    eps0: float = 0.0

    @property
    def N(self):
        return self.sigmas.shape[0]

    @property
    def M(self):
        return self.sigmas.shape[1]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Generating triple and the true per-column covariances."""

    phi_bar: np.ndarray
    w_bar: np.ndarray
    h_bar: np.ndarray
    sigmas_true: np.ndarray

    @property
    def K_bar(self):
        return self.w_bar.shape[1]

    def power(self):
        return self.w_bar @ self.h_bar


@dataclass(frozen=True)
class SolverConfig:
    """Rank, regularizer and iteration budgets shared by both solvers."""

    K: int = 5
    eps0: float = 1e-8
    J: int = 1000
    J_TL: int = 1
    J_NMF: int = 10
    P: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ConfigError("eps0 must be positive")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if min(self.J_TL, self.J_NMF, self.P) < 1 or self.J < 0:
            raise ConfigError("iteration counts and P must be >= 1")

    @classmethod
    def gcm(cls, **kw):
        """Settings used for the Gaussian composite model dataset."""
        base = dict(K=5, eps0=1e-8, J=1000, J_TL=1, J_NMF=10, P=100)
        base.update(kw)
        return cls(**base)

    @classmethod
    def notes(cls, **kw):
        """Settings used for the synthetic music notes dataset."""
        base = dict(K=2, eps0=5e-7, J=100, J_TL=1, J_NMF=10, P=10)
        base.update(kw)
        return cls(**base)

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return SolverConfig(**d)


# ---------------------------------------------------------------------------
# Orthogonal group utilities
# ---------------------------------------------------------------------------


def orthogonality_error(phi):
    """Max-norm of ``phi.T @ phi - I``."""
    phi = np.asarray(phi)
    return float(np.max(np.abs(phi.T @ phi - np.eye(phi.shape[0]))))


def check_orthogonal(phi, tol=ORTHO_TOL):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ContractError(f"transform must be square, got {phi.shape}")
    err = orthogonality_error(phi)
    if err > tol:
        raise ContractError(f"transform is not orthogonal (drift {err:.3g})")
    return phi


def matrix_exp_antisym(E):
    """Exponential of an antisymmetric matrix, an element of SO(M).

    Scaling and squaring with a degree-13 Pade approximant (``scipy.linalg.expm``);
    the result is re-projected if rounding pushed it off the group.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ContractError("E must be square")
    if np.max(np.abs(E + E.T), initial=0.0) > 1e-10:
        raise ContractError("E is not antisymmetric")
    E = 0.5 * (E - E.T)
    Q = scipy.linalg.expm(E)
    if orthogonality_error(Q) > DRIFT_TOL:
        Q = polar_project(Q)
    return Q


def polar_project(A):
    """Frobenius-nearest orthogonal matrix, the polar factor ``U V^T`` of A."""
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularityError("polar projection of a rank-deficient matrix is not unique")
    return U @ Vt


def reorthogonalize(phi, tol=DRIFT_TOL):
    """Re-project onto O(M) only when drift exceeds ``tol``."""
    if orthogonality_error(phi) > tol:
        return polar_project(phi)
    return phi


def sym_inv_sqrt(S):
    """Inverse square root of a symmetric positive definite matrix."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    if lam[0] <= 0:
        raise SingularityError("matrix is not positive definite")
    return (U / np.sqrt(lam)) @ U.T


# Bernoulli-number coefficients B_2k / (2k) of the asymptotic digamma series.
_PSI_ASYMPTOTIC = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def digamma(x):
    """Digamma function for x > 0, absolute error below 1e-13.

    Upward recurrence ``psi(x) = psi(x + 1) - 1/x`` until x >= 8, then the
    asymptotic expansion in 1/x^2.
    """
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"digamma requires a finite x > 0, got {x}")
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for c in reversed(_PSI_ASYMPTOTIC):
        series = (series + c) * inv2
    return acc + math.log(x) - 0.5 / x - series
