"""Objectives and statistical diagnostics.

``C_S = L_S + I_S`` where ``L_S`` is the joint-diagonalization term and
``I_S`` the regularized Itakura-Saito fit of the empirical power spectrum.
"""
from __future__ import annotations

import numpy as np

from .core import (
    ConfigError,
    ContractError,
    CovarianceStack,
    digamma,
    GroundTruth,
    NmfFactors,
    RealizationSet,
    sym_inv_sqrt,
)


class Moments:
    """Second-order statistics of ``phi @ Y`` for one transform.

    Holds either transformed realizations (cheap when there are fewer of
    them than M) or the transformed covariance stack ``phi Sigma_n phi^T``,
    and exposes the column-weighted Gram matrix used by every gradient:
    ``R(w)_ab = sum_n w_an [phi Sigma_{n,S} phi^T]_ab`` (no shrinkage).

    Routes: ``"data"`` uses the realizations as given, ``"compact"`` the
    rank-reduced equivalent set :attr:`RealizationSet.compact`, ``"cov"``
    the covariance stack. The default picks the cheapest.
    """

    def __init__(self, phi, data: RealizationSet, route=None):
        self.phi = phi
        self.M, self.N = data.M, data.N
        if route is None:
            small = data.compact
            route = "cov" if small.S > data.M else ("data" if small is data else "compact")
        if route == "compact":
            data = data.compact
        self.S = data.S
        self.route = route
        if route in ("data", "compact"):
            self.X = (phi @ data.wide).reshape(self.M, self.S, self.N)
            self.V = np.einsum("msn,msn->mn", self.X, self.X) / self.S
        elif route == "cov":
            self.T = phi @ data.gram @ phi.T
            self.V = np.einsum("naa->an", self.T).copy()
        else:
            raise ValueError(f"unknown route {route!r}")

    def weighted_gram(self, w):
        if self.route != "cov":
            Xw = (self.X * w[:, None, :]).reshape(self.M, -1)
            return Xw @ self.X.reshape(self.M, -1).T / self.S
        return np.einsum("an,nab->ab", w, self.T)


def _as_data(data):
    return data if isinstance(data, RealizationSet) else RealizationSet(data)


def empirical_power(phi, data):
    """Entrywise mean over realizations of ``(phi @ Y)**2``, shape (M, N)."""
    data = _as_data(data)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (data.M, data.M):
        raise ContractError(f"transform shape {phi.shape} does not match M={data.M}")
    return Moments(phi, data).V


def covariance_stack(data, eps0=0.0):
    """Empirical per-column covariances plus ``eps0 * I``."""
    data = _as_data(data)
    sig = data.gram + eps0 * np.eye(data.M)[None]
    return CovarianceStack(sigmas=sig, eps0=float(eps0))


def is_div_reg(A, B, eps0):
    """Regularized Itakura-Saito divergence ``sum f((A+eps0)/(B+eps0))``, f(x) = x - log x - 1."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ContractError(f"shape mismatch {A.shape} vs {B.shape}")
    r = (A + eps0) / (B + eps0)
    return float(np.sum(r - np.log(r) - 1.0))


def _factor_product(factors, shape):
    WH = factors.W @ factors.H
    if WH.shape != shape:
        raise ContractError(f"W @ H has shape {WH.shape}, expected {shape}")
    return WH


def objective_I(phi, factors: NmfFactors, data, eps0):
    V = empirical_power(phi, data)
    return is_div_reg(V, _factor_product(factors, V.shape), eps0)


def log_power_sum(V, eps0):
    """``MN + sum log(V + eps0)``, the joint-diagonalization term from a power matrix."""
    return float(V.size + np.sum(np.log(V + eps0)))


def objective_L(phi, data, eps0):
    return log_power_sum(empirical_power(phi, data), eps0)


def objective_L_jd(phi, cov: CovarianceStack):
    """``MN + sum_n log det Diag(phi Sigma_n phi^T)`` on a shrunk covariance stack."""
    phi = np.asarray(phi, dtype=float)
    d = np.einsum("am,nmk,ak->na", phi, cov.sigmas, phi)
    if (d <= 0).any():
        raise ContractError("nonpositive diagonal entry: corrupted covariance stack")
    return float(d.size + np.sum(np.log(d)))


def c_from_power(V, WH, eps0):
    return float(np.sum((V + eps0) / (WH + eps0) + np.log(WH + eps0)))


def objective_C(phi, factors: NmfFactors, data, eps0):
    """TL-NMF objective."""
    V = empirical_power(phi, data)
    return c_from_power(V, _factor_product(factors, V.shape), eps0)


def true_power(phi, truth: GroundTruth):
    """``[phi Sigma_n phi^T]_mm`` for the true covariances, shape (M, N)."""
    return np.einsum("am,nmk,ak->an", phi, truth.sigmas_true, phi)


def q_s(phi, data, truth: GroundTruth, eps0):
    """IS divergence between empirical and true power spectra."""
    return is_div_reg(empirical_power(phi, data), true_power(phi, truth), eps0)


def exact_oracle_factors(phi, truth: GroundTruth, K):
    """Feasible pair whose product is exactly the true power spectrum of ``phi @ Y``.

    Columns k < K_bar mix the normalized true dictionary columns through the
    squared entries of ``phi @ phi_bar.T``; extra columns are uniform with
    zero activations.
    """
    Kb = truth.K_bar
    if K < Kb:
        raise ConfigError(f"K={K} must be >= K_bar={Kb}")
    D2 = (phi @ truth.phi_bar.T) ** 2
    norms = truth.w_bar.sum(axis=0)
    M = phi.shape[0]
    N = truth.h_bar.shape[1]
    W = np.full((M, K), 1.0 / M)
    H = np.zeros((K, N))
    W[:, :Kb] = D2 @ (truth.w_bar / norms)
    H[:Kb] = truth.h_bar * norms[:, None]
    return NmfFactors(W, H)


def u_s_bound(data, truth: GroundTruth):
    """``max_n || Sigma_n^{-1/2} Sigma_{n,S} Sigma_n^{-1/2} - I ||_2``.

    ``data`` may also be a CovarianceStack of unshrunk empirical covariances.
    """
    if isinstance(data, CovarianceStack):
        emp = data.sigmas
    else:
        emp = _as_data(data).gram
    worst = 0.0
    I = np.eye(emp.shape[1])
    for n in range(emp.shape[0]):
        R = sym_inv_sqrt(truth.sigmas_true[n])
        dev = R @ emp[n] @ R - I
        worst = max(worst, float(np.linalg.norm(0.5 * (dev + dev.T), 2)))
    return worst


def h_s(M, S, t):
    """Deviation level ``3 (sqrt(M) + t) / sqrt(S)`` of the GCM uniform bound."""
    return 3.0 * (np.sqrt(M) + t) / np.sqrt(S)


def predicted_rate(S):
    """Expected ``Q_S(phi_bar) / (MN)`` under the GCM: ``log S - psi(S/2) - log 2``."""
    return float(np.log(S) - digamma(S / 2.0) - np.log(2.0))
