"""Experiment drivers: gap decay, atom recovery, complexity curves and rates.

Each ``cmd_*`` function returns plain rows (dataclasses); writing them to
disk is left to :mod:`tlnmf.io` and the command-line front end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.optimize

from .core import ConfigError, NmfFactors, SolverConfig
from .datagen import GcmSpec, NotesSpec, gen_gcm, gen_notes
from .nmf import mu_run
from .objectives import Moments, c_from_power, h_s, predicted_rate, q_s
from .qn import JDProblem, qn_minimize
from .solvers import multi_init, random_init, tlnmf_solve

DEFAULT_S_GRID = (1, 3, 10, 30, 100, 300, 1000, 3000)
DEFAULT_J_GRID = (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


def derived_seed(*keys):
    """Deterministic 32-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Harmonic regression of atoms
# ---------------------------------------------------------------------------


class HarmonicFit(NamedTuple):
    f: float
    a: float
    theta: float
    error: float
    degenerate: bool = False


def _fit_at(atom, t, f, f0):
    """Closed-form amplitude and phase at fixed frequency f.

    ``a cos(w t + theta) = c cos(w t) + d sin(w t)`` with ``c = a cos theta``
    and ``d = -a sin theta``, solved by linear least squares.
    """
    w = 2 * np.pi * f / f0
    B = np.column_stack([np.cos(w * t), np.sin(w * t)])
    coef = np.linalg.lstsq(B, atom, rcond=None)[0]
    r = atom - B @ coef
    return float(r @ r), coef


def _grid_errors(atom, t, freqs, f0):
    # batched 2x2 normal equations over the whole frequency grid
    wt = 2 * np.pi * np.outer(freqs, t) / f0
    C, S = np.cos(wt), np.sin(wt)
    cc, ss, cs = (C * C).sum(1), (S * S).sum(1), (C * S).sum(1)
    bc, bs = C @ atom, S @ atom
    det = cc * ss - cs**2
    ok = det > 1e-12 * np.maximum(cc * ss, 1e-300)
    # projection energy; degenerate rows (f = 0 or Nyquist) use one basis vector
    proj = np.where(
        ok,
        (ss * bc**2 - 2 * cs * bc * bs + cc * bs**2) / np.where(ok, det, 1.0),
        bc**2 / np.maximum(cc, 1e-300),
    )
    return atom @ atom - proj


def harmonic_regression(atom, f0, xtol=1e-12):
    """Best single cosine ``a cos(2 pi f t / f0 + theta)``, t = 0..M-1.

    Coarse grid over [0, f0/2] with step ``f0 / (20 M)``, then golden-section
    refinement around the best grid point. ``error`` is the squared residual
    norm at the returned parameters.

    Returns
    -------
    HarmonicFit
        ``degenerate=True`` (and all fields zero) for an all-zero atom.
    """
    atom = np.asarray(atom, dtype=float).ravel()
    M = atom.size
    if not np.any(atom):
        return HarmonicFit(0.0, 0.0, 0.0, 0.0, True)
    t = np.arange(M)
    step = f0 / (20 * M)
    freqs = np.arange(0.0, f0 / 2 + step / 2, step)
    k = int(np.argmin(_grid_errors(atom, t, freqs, f0)))

    f = float(freqs[k])
    if 0 < k < len(freqs) - 1:
        # the grid minimum brackets a local minimum of the residual
        res = scipy.optimize.minimize_scalar(
            lambda x: _fit_at(atom, t, x, f0)[0],
            bracket=(freqs[k - 1], f, freqs[k + 1]),
            method="golden",
            tol=xtol,
        )
        if _fit_at(atom, t, res.x, f0)[0] <= _fit_at(atom, t, f, f0)[0]:
            f = float(res.x)
    err, (c, d) = _fit_at(atom, t, f, f0)
    return HarmonicFit(f, float(math.hypot(c, d)), float(math.atan2(-d, c)), err)


def harmonic_error(atom, f0, f, a, theta):
    t = np.arange(len(atom))
    r = np.asarray(atom, float) - a * np.cos(2 * np.pi * f * t / f0 + theta)
    return float(r @ r)


# ---------------------------------------------------------------------------
# Datasets for the experiments
# ---------------------------------------------------------------------------


def make_dataset(dataset, S, seed, **spec_kw):
    """Data for one grid point.

    For ``"gcm"`` the dictionary and activations depend on ``seed`` only and
    the realizations are re-drawn for each S; ``"notes"`` draws fresh phases.
    Returns ``(data, truth_or_None)``.
    """
    if dataset == "gcm":
        return gen_gcm(GcmSpec(S=S, seed=seed, noise_seed=derived_seed(seed, S), **spec_kw))
    if dataset == "notes":
        return gen_notes(NotesSpec(S=S, seed=derived_seed(seed, S), **spec_kw)), None
    raise ConfigError(f"unknown dataset {dataset!r}")


def default_config(dataset, **overrides):
    if dataset == "gcm":
        return SolverConfig.gcm(**overrides)
    if dataset == "notes":
        return SolverConfig.notes(**overrides)
    raise ConfigError(f"unknown dataset {dataset!r}")


# ---------------------------------------------------------------------------
# Gap decay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapRow:
    S: int
    I_star: float
    I_dot: float
    gap: float
    C_star: float
    C_dot: float
    L_star: float
    L_dot: float
    seed: int


def loglog_slope(x, y):
    """Least-squares slope of log y against log x; NaN if any y <= 0."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def gap_point(dataset, S, config: SolverConfig, data_seed=0, runner=map, spec_kw=None):
    data, _ = make_dataset(dataset, S, data_seed, **(spec_kw or {}))
    rep = multi_init(data, config, runner=runner)
    tl, jd = rep.best_tlnmf.final, rep.best_jdnmf.final
    return GapRow(S, tl.I, jd.I, jd.I - tl.I, tl.C, jd.C, tl.L, jd.L, data_seed)


def cmd_gap(dataset, S_grid, config: SolverConfig, data_seed=0, runner=map, min_S=10, spec_kw=None):
    """Selected-solution I_S of both solvers over a grid of S.

    Returns the rows (sorted by S) and the log-log slopes of ``I_star`` and
    ``gap`` over the grid points with ``S >= min_S``.
    """
    grid = sorted({int(s) for s in S_grid})
    if not grid:
        raise ConfigError("empty S grid")
    if grid[0] < 1:
        raise ConfigError("S must be >= 1")
    rows = [gap_point(dataset, S, config, data_seed, runner, spec_kw) for S in grid]
    tail = [r for r in rows if r.S >= min_S]
    slopes = {
        "I_star": loglog_slope([r.S for r in tail], [r.I_star for r in tail]),
        "gap": loglog_slope([r.S for r in tail], [r.gap for r in tail]),
    }
    return rows, slopes


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomRow:
    method: str
    rank: int
    index: int
    power: float
    f: float
    a: float
    theta: float
    error: float


@dataclass(eq=False)
class AtomsResult:
    rows: list
    atoms: dict  # method -> (top, M) selected rows of phi
    factors: dict  # method -> NmfFactors
    report: object


def top_atoms(phi, data, top=8):
    """Indices of the rows of phi with the largest mean energy, descending."""
    energy = Moments(phi, data).V.sum(axis=1)
    order = np.argsort(-energy, kind="stable")[:top]
    return order, energy[order]


def cmd_atoms(S, config: SolverConfig, data_seed=0, top=8, runner=map, **spec_kw):
    """Learn transforms on the notes dataset and fit a cosine to the top atoms."""
    data, _ = make_dataset("notes", S, data_seed, **spec_kw)
    f0 = data.meta["f0"]
    rep = multi_init(data, config, runner=runner)
    rows, atoms, factors = [], {}, {}
    for method, res in (("tlnmf", rep.best_tlnmf), ("jdnmf", rep.best_jdnmf)):
        idx, energy = top_atoms(res.phi, data, top)
        atoms[method] = res.phi[idx]
        factors[method] = res.factors
        for r, (k, e) in enumerate(zip(idx, energy)):
            fit = harmonic_regression(res.phi[k], f0)
            rows.append(AtomRow(method, r, int(k), float(e), fit.f, fit.a, fit.theta, fit.error))
    return AtomsResult(rows, atoms, factors, rep)


# ---------------------------------------------------------------------------
# Complexity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComplexityRow:
    J: int
    C_tlnmf: float
    C_jdnmf: float


def cmd_complexity(dataset, S, config: SolverConfig, J_grid=DEFAULT_J_GRID, data_seed=0, spec_kw=None):
    """C_S after matched budgets of updates, from one shared random init.

    TL-NMF with J outer iterations is a prefix of the longest run, so one run
    serves the whole grid. JD+NMF with J uses J*J_TL QN steps (again a prefix)
    followed by J*J_NMF MU sweeps from the initial factors.
    """
    grid = sorted({int(j) for j in J_grid})
    if not grid or grid[0] < 0:
        raise ConfigError("J grid must be nonempty and nonnegative")
    data, _ = make_dataset(dataset, S, data_seed, **(spec_kw or {}))
    eps0 = config.eps0
    phi0, W0, H0 = random_init(data, config.K, config.seed)
    J_max = grid[-1]

    tl = tlnmf_solve(data, config.replace(J=J_max), (phi0, W0, H0))
    C_tl = {p.iter: p.C for p in tl.trace}

    wanted = {J * config.J_TL: J for J in grid}
    phis = {0: phi0}
    problem = JDProblem(data, eps0)

    def keep(k, phi, value, step):
        if k + 1 in wanted:
            phis[k + 1] = phi

    qn_minimize(problem, problem.direction, phi0, J_max * config.J_TL, problem.retraction, keep)

    rows = []
    for J in grid:
        V = Moments(phis[J * config.J_TL], data).V
        f = mu_run(V, NmfFactors(W0, H0), eps0, J * config.J_NMF)
        rows.append(ComplexityRow(J, C_tl[J], c_from_power(V, f.product(), eps0)))
    return rows


# ---------------------------------------------------------------------------
# Rate of the empirical power deviation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateRow:
    S: int
    mean_q: float
    predicted: float
    h: float
    bound: float
    max_q: float
    violations: int
    trials: int


def rate_trials(M, N, K_bar, S, trials, seed=0, eps0=1e-12):
    """``Q_S(phi_bar) / (MN)`` over independent GCM draws."""
    out = np.empty(trials)
    for i in range(trials):
        data, truth = gen_gcm(GcmSpec(M=M, N=N, K_bar=K_bar, S=S, seed=derived_seed(seed, S, i)))
        out[i] = q_s(truth.phi_bar, data, truth, eps0) / (M * N)
    return out


def cmd_rate(M, N, K_bar, S_grid, trials, seed=0, t=3.0):
    """Mean normalized Q_S at the true transform against its predicted value.

    ``bound`` is ``h^2 / (1 - h)`` when ``h = h_S(M, S, t) < 1`` and NaN
    otherwise; ``violations`` counts trials above it.
    """
    grid = sorted({int(s) for s in S_grid})
    if not grid:
        raise ConfigError("empty S grid")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rows = []
    for S in grid:
        q = rate_trials(M, N, K_bar, S, trials, seed)
        h = h_s(M, S, t)
        bound = h * h / (1 - h) if h < 1 else float("nan")
        violations = int(np.sum(q > bound)) if h < 1 else 0
        rows.append(RateRow(S, float(q.mean()), predicted_rate(S), float(h), bound,
                            float(q.max()), violations, trials))
    return rows
