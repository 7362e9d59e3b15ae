"""Multiplicative updates for regularized Itakura-Saito NMF."""
from __future__ import annotations

import logging

import numpy as np

from .core import NmfFactors

log = logging.getLogger(__name__)

VARIANTS = ("consistent", "verbatim")


def _ratio_update(X, num, den):
    # zero denominators leave the entry unchanged
    return X * np.divide(num, den, out=np.ones_like(num), where=den > 0)


def normalize(W, H):
    """Rescale to unit l1 columns of W, moving the scale into the rows of H.

    A column of W that vanished is reset to the uniform column with a zero
    activation row.
    """
    norms = W.sum(axis=0)
    dead = norms <= 0
    if dead.any():
        log.warning("resetting %d vanished dictionary column(s)", int(dead.sum()))
        W = W.copy()
        H = H.copy()
        W[:, dead] = 1.0 / W.shape[0]
        H[dead] = 0.0
        norms = np.where(dead, 1.0, norms)
    return W / norms, H * norms[:, None]


def mu_update(V, W, H, eps0, variant="consistent"):
    """H-then-W multiplicative updates without normalization or checks."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    target = V + eps0 if variant == "consistent" else V
    Vh = W @ H + eps0
    H = _ratio_update(H, W.T @ (target / Vh**2), W.T @ (1.0 / Vh))
    Vh = W @ H + eps0
    W = _ratio_update(W, (target / Vh**2) @ H.T, (1.0 / Vh) @ H.T)
    return W, H


def mu_sweep(V, factors: NmfFactors, eps0, variant="consistent"):
    """One H-then-W sweep of the IS-NMF multiplicative updates, then normalization.

    ``variant="consistent"`` uses ``V + eps0`` in the numerators, which makes
    each sweep nonincreasing for the regularized divergence; ``"verbatim"``
    uses ``V`` alone.
    """
    factors.check()
    return NmfFactors(*normalize(*mu_update(V, factors.W, factors.H, eps0, variant)))


def mu_run(V, factors: NmfFactors, eps0, n_iter, variant="consistent", callback=None):
    """``n_iter`` successive sweeps; ``callback(j, factors)`` after each."""
    for j in range(n_iter):
        factors = mu_sweep(V, factors, eps0, variant)
        if callback is not None:
            callback(j, factors)
    return factors
