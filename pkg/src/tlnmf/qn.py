"""Quasi-Newton minimization over the orthogonal group.

Both objectives are handled through a local parameterization
``E -> rho_phi(E)`` over antisymmetric matrices E:

* TL-NMF uses the exponential map ``expm(E) @ phi``,
* joint diagonalization uses ``polar(phi + E @ phi)``.

A direction solves the quadratic model built from the gradient G and a
structured Hessian approximation with coefficients Gamma, in closed form.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .core import CovarianceStack, NmfFactors, RealizationSet, matrix_exp_antisym, polar_project, reorthogonalize
from .objectives import Moments, c_from_power, log_power_sum

DEGENERATE_TOL = 1e-14


# ---------------------------------------------------------------------------
# Gradients, Hessian coefficients, directions
# ---------------------------------------------------------------------------


def _tl_weights(factors, eps0):
    return 1.0 / (factors.W @ factors.H + eps0)


def tlnmf_gradient(phi, data: RealizationSet, factors: NmfFactors, eps0, moments=None):
    """Gradient of ``E -> C_S(expm(E) phi, W, H)`` at E = 0.

    ``G_ab = (2/S) sum_{n,s} X_an X_bn / ([WH]_an + eps0)`` with ``X = phi Y``.
    """
    mom = moments if moments is not None else Moments(phi, data)
    return 2.0 * mom.weighted_gram(_tl_weights(factors, eps0))


def tlnmf_gamma(phi, data: RealizationSet, factors: NmfFactors, eps0, moments=None):
    """Diagonal Hessian coefficients ``Gamma_ab = (2/S) sum X_bn^2 / ([WH]_an + eps0)``."""
    mom = moments if moments is not None else Moments(phi, data)
    return 2.0 * _tl_weights(factors, eps0) @ mom.V.T


def _antisym(G):
    return 0.5 * (G - G.T)


def _sym(G):
    return 0.5 * (G + G.T)


def tlnmf_direction(G, Gamma):
    """Minimizer of ``<G, E> + 1/2 sum Gamma_ab E_ab^2`` over antisymmetric E."""
    Ga = _antisym(G)
    Gs = _sym(Gamma)
    ok = np.abs(Gs) > DEGENERATE_TOL
    return -np.divide(Ga, Gs, out=np.zeros_like(Ga), where=ok)


def jd_gradient(phi, cov: CovarianceStack):
    """Gradient of the normalized joint-diagonalization criterion.

    ``G_ab = (1/N) sum_n (C_n,ab / C_n,aa - delta_ab)`` with
    ``C_n = phi (Sigma_{n,S} + eps0 I) phi^T``. This is the gradient at E = 0 of
    ``(L_S(rho_phi(E)) - MN) / (2N)``.
    """
    C = phi @ cov.sigmas @ phi.T
    d = np.einsum("naa->na", C)
    return np.mean(C / d[:, :, None], axis=0) - np.eye(phi.shape[0])


def jd_gamma(phi, cov: CovarianceStack):
    """``Gamma_ab = (1/N) sum_n C_n,bb / C_n,aa``."""
    d = np.einsum("am,nmk,ak->na", phi, cov.sigmas, phi)
    return (1.0 / d).T @ d / d.shape[0]


def jd_grad_gamma_from_moments(mom: Moments, eps0):
    """Same quantities as :func:`jd_gradient` / :func:`jd_gamma`, from cached moments."""
    c = mom.V + eps0
    w = 1.0 / c
    N = mom.N
    G = mom.weighted_gram(w)
    G[np.diag_indices_from(G)] += eps0 * w.sum(axis=1)
    G = G / N - np.eye(mom.M)
    Gamma = w @ c.T / N
    return G, Gamma


def jd_direction(G, Gamma):
    """Minimizer of the structured quadratic model of the JD criterion."""
    Ga = _antisym(G)
    Gs = _sym(Gamma) - 1.0
    ok = np.abs(Gs) > DEGENERATE_TOL
    return -np.divide(Ga, Gs, out=np.zeros_like(Ga), where=ok)


# ---------------------------------------------------------------------------
# Retractions, line search, generic driver
# ---------------------------------------------------------------------------


class _SkewSpectrum:
    """Real spectral data of an antisymmetric E.

    ``E^2 = V diag(-w^2) V^T`` is symmetric, and any analytic function of a
    normal E splits as ``c(E^2) + E s(E^2)``. Both retractions are of this
    form, so one decomposition serves every step size the line search tries.
    """

    def __init__(self, E):
        lam, self.V = np.linalg.eigh(E @ E)
        self.w = np.sqrt(np.clip(-lam, 0.0, None))
        self.EV = E @ self.V

    def apply(self, c, s, phi):
        """``(V diag(c) V^T + E V diag(s) V^T) @ phi``."""
        return ((self.V * c + self.EV * s) @ self.V.T) @ phi


class ExpRetraction:
    """``(phi, E) -> expm(E) @ phi``."""

    def __call__(self, phi, E):
        return reorthogonalize(matrix_exp_antisym(E) @ phi)

    def path(self, phi, E):
        spec = _SkewSpectrum(E)

        def at(eta):
            # sin(eta w) / w written through sinc to stay finite at w = 0
            s = eta * np.sinc(eta * spec.w / np.pi)
            return reorthogonalize(spec.apply(np.cos(eta * spec.w), s, phi))

        return at


class PolarRetraction:
    """``(phi, E) -> polar(phi + E @ phi)``.

    Since phi is orthogonal, ``polar((I + E) phi) = polar(I + E) phi``, and
    for normal E, ``polar(I + E) = (I + E) (I - E^2)^{-1/2}``.
    """

    def __call__(self, phi, E):
        if not np.any(E):
            return phi
        return polar_project(phi + E @ phi)

    def path(self, phi, E):
        spec = _SkewSpectrum(E)

        def at(eta):
            d = 1.0 / np.sqrt(1.0 + (eta * spec.w) ** 2)
            return reorthogonalize(spec.apply(d, eta * d, phi))

        return at


exp_retraction = ExpRetraction()
polar_retraction = PolarRetraction()


class Step(NamedTuple):
    eta: float
    phi: np.ndarray
    value: float


def line_search(objective, phi, E, retraction, value=None, max_halvings=30):
    """Backtracking by halving from eta = 1 with simple decrease.

    Returns the accepted :class:`Step`, or ``None`` when E is zero or no
    step size down to ``2**-max_halvings`` decreases the objective (stall).
    """
    if not np.any(E):
        return None
    if value is None:
        value = objective(phi)
    if hasattr(retraction, "path"):
        at = retraction.path(phi, E)
    else:
        def at(eta):
            return retraction(phi, eta * E)
    eta = 1.0
    for _ in range(max_halvings + 1):
        cand = at(eta)
        f = objective(cand)
        if f < value:
            return Step(eta, cand, f)
        eta *= 0.5
    return None


def qn_minimize(
    objective: Callable,
    direction: Callable,
    phi0,
    n_iter,
    retraction,
    callback=None,
):
    """Generic quasi-Newton loop on O(M).

    Parameters
    ----------
    objective : callable
        ``phi -> float``.
    direction : callable
        ``phi -> E``, antisymmetric quasi-Newton direction at ``phi``.
    phi0 : ndarray
        Starting orthogonal matrix.
    n_iter : int
        Fixed iteration budget.
    retraction : callable
        ``(phi, E) -> phi'``.
    callback : callable, optional
        ``callback(j, phi, value, step)`` after each iteration; ``step`` is
        ``None`` on a stall.

    Returns
    -------
    phi : ndarray
    value : float
    """
    phi = phi0
    value = objective(phi)
    for j in range(n_iter):
        E = direction(phi)
        step = line_search(objective, phi, E, retraction, value)
        if step is not None:
            phi, value = step.phi, step.value
        if callback is not None:
            callback(j, phi, value, step)
    return phi, value


# ---------------------------------------------------------------------------
# The two concrete problems, with moment caching across line search and
# direction computation
# ---------------------------------------------------------------------------


class _CachedProblem:
    def __init__(self, data: RealizationSet, eps0):
        self.data = data
        self.eps0 = eps0
        self._cache = []

    def moments(self, phi):
        for key, mom in self._cache:
            if key is phi:
                return mom
        mom = Moments(phi, self.data)
        self._cache = [(phi, mom)] + self._cache[:1]
        return mom


class TLNMFProblem(_CachedProblem):
    """``phi -> C_S(phi, W, H)`` for fixed factors."""

    retraction = exp_retraction

    def __init__(self, data, factors: NmfFactors, eps0):
        super().__init__(data, eps0)
        self.factors = factors
        self.WH = factors.W @ factors.H

    def __call__(self, phi):
        return c_from_power(self.moments(phi).V, self.WH, self.eps0)

    def grad_gamma(self, phi):
        mom = self.moments(phi)
        return (
            tlnmf_gradient(phi, self.data, self.factors, self.eps0, mom),
            tlnmf_gamma(phi, self.data, self.factors, self.eps0, mom),
        )

    def direction(self, phi):
        return tlnmf_direction(*self.grad_gamma(phi))


class JDProblem(_CachedProblem):
    """``phi -> L_S(phi)``."""

    retraction = polar_retraction

    def __call__(self, phi):
        return log_power_sum(self.moments(phi).V, self.eps0)

    def grad_gamma(self, phi):
        return jd_grad_gamma_from_moments(self.moments(phi), self.eps0)

    def direction(self, phi):
        return jd_direction(*self.grad_gamma(phi))
