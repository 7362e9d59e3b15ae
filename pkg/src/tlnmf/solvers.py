"""TL-NMF and JD+NMF pipelines and the multi-initialization strategy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ContractError,
    NmfFactors,
    NumericalError,
    RealizationSet,
    SolverConfig,
    check_orthogonal,
    polar_project,
)
from .nmf import mu_run
from .objectives import Moments, c_from_power, is_div_reg, log_power_sum
from .qn import JDProblem, TLNMFProblem, qn_minimize


@dataclass(frozen=True)
class TracePoint:
    iter: int
    C: float
    L: float
    I: float
    phase: str = ""


@dataclass(eq=False)
class SolveResult:
    phi: np.ndarray
    factors: NmfFactors
    trace: list = field(default_factory=list)
    init_id: int = 0
    method: str = ""

    @property
    def final(self):
        return self.trace[-1]


@dataclass(eq=False)
class MultiInitReport:
    best_tlnmf: SolveResult
    best_jdnmf: SolveResult
    all_final_objectives: list
    tlnmf_runs: list = field(default_factory=list)
    jdnmf_runs: list = field(default_factory=list)


def _point(it, V, WH, eps0, phase=""):
    C = c_from_power(V, WH, eps0)
    L = log_power_sum(V, eps0)
    I = is_div_reg(V, WH, eps0)
    if not all(map(math.isfinite, (C, L, I))):
        raise NumericalError(f"non-finite objective at iteration {it} ({phase})", iteration=it)
    return TracePoint(it, C, L, I, phase)


def _check_init(init, data):
    phi0, W0, H0 = init
    check_orthogonal(phi0)
    if phi0.shape[0] != data.M or H0.shape[1] != data.N:
        raise ContractError("initialization does not match the data dimensions")
    return phi0, NmfFactors(np.asarray(W0, float), np.asarray(H0, float)).check(1e-10)


def tlnmf_solve(data: RealizationSet, config: SolverConfig, init, substeps=False, init_id=0):
    """Alternate MU sweeps on (W, H) and QN steps on phi for ``config.J`` rounds.

    With ``substeps=True`` the trace holds a point after every MU sweep and
    every QN step; otherwise one point per outer iteration (plus the start).
    """
    phi, factors = _check_init(init, data)
    eps0 = config.eps0
    counter = [0]
    V = Moments(phi, data).V
    trace = [_point(0, V, factors.product(), eps0, "init")]

    for j in range(config.J):
        V = Moments(phi, data).V

        def on_sweep(k, f, V=V):
            if substeps:
                counter[0] += 1
                trace.append(_point(counter[0], V, f.product(), eps0, "mu"))

        factors = mu_run(V, factors, eps0, config.J_NMF, callback=on_sweep)
        problem = TLNMFProblem(data, factors, eps0)

        def on_step(k, p, value, step):
            if substeps:
                counter[0] += 1
                trace.append(_point(counter[0], problem.moments(p).V, problem.WH, eps0, "qn"))

        phi, _ = qn_minimize(problem, problem.direction, phi, config.J_TL, problem.retraction, on_step)
        if not substeps:
            trace.append(_point(j + 1, problem.moments(phi).V, problem.WH, eps0, "outer"))
    return SolveResult(phi, factors, trace, init_id, "tlnmf")


def jd_phase(data, phi0, eps0, n_iter, callback=None):
    """QN joint diagonalization of the shrunk covariance stack, ``n_iter`` steps."""
    problem = JDProblem(data, eps0)
    phi, _ = qn_minimize(problem, problem.direction, phi0, n_iter, problem.retraction, callback)
    return phi, problem


def jdnmf_solve(data: RealizationSet, config: SolverConfig, init, substeps=False, init_id=0):
    """``J * J_TL`` QN steps on L_S, then ``J * J_NMF`` MU sweeps on I_S."""
    phi, factors = _check_init(init, data)
    eps0 = config.eps0
    WH0 = factors.product()
    V = Moments(phi, data).V
    trace = [_point(0, V, WH0, eps0, "init")]
    every = 1 if substeps else config.J_TL
    problem = JDProblem(data, eps0)

    def on_step(k, p, value, step):
        if (k + 1) % every == 0:
            trace.append(_point(len(trace), problem.moments(p).V, WH0, eps0, "jd"))

    phi, _ = qn_minimize(problem, problem.direction, phi, config.J * config.J_TL, problem.retraction, on_step)

    V = problem.moments(phi).V
    every = 1 if substeps else config.J_NMF

    def on_sweep(k, f):
        if (k + 1) % every == 0:
            trace.append(_point(len(trace), V, f.product(), eps0, "mu"))

    factors = mu_run(V, factors, eps0, config.J * config.J_NMF, callback=on_sweep)
    return SolveResult(phi, factors, trace, init_id, "jdnmf")


def random_init(data: RealizationSet, K, seed):
    """Random feasible starting point.

    phi0 is the polar factor of a standard Gaussian matrix; W0, H0 are
    absolute Gaussians, W0 normalized by column and H0 scaled so that
    ``mean(W0 H0)`` matches the mean empirical power under phi0.
    """
    rng = np.random.default_rng(seed)
    M, N = data.M, data.N
    phi0 = polar_project(rng.standard_normal((M, M)))
    W0 = np.abs(rng.standard_normal((M, K)))
    W0 /= W0.sum(axis=0)
    H0 = np.abs(rng.standard_normal((K, N)))
    V = Moments(phi0, data).V
    target = V.mean()
    current = (W0 @ H0).mean()
    if target > 0 and current > 0:
        H0 *= target / current
    return phi0, W0, H0


def init_seeds(seed, P):
    """Independent per-initialization seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(P)]


def _argmin(values):
    # ties resolved toward the lowest init_id
    return int(np.argmin(np.asarray(values)))


def multi_init(data: RealizationSet, config: SolverConfig, runner=map):
    """Best-of-2P runs for both solvers with cross-seeding.

    Each solver is run from P random starts; the P final triples of each
    solver then seed P extra runs of the other one. TL-NMF keeps the lowest
    C_S. JD+NMF keeps the transform with the lowest L_S, then refits (W, H)
    on it from all 2P factor initializations and keeps the lowest I_S.

    ``runner`` is a ``map``-like callable used to evaluate independent runs
    (e.g. ``executor.map``); results are ordered by init_id either way.
    """
    P = config.P
    inits = [random_init(data, config.K, s) for s in init_seeds(config.seed, P)]

    first = list(runner(_run_one, [("tl", data, config, init, p) for p, init in enumerate(inits)]
                       + [("jd", data, config, init, p) for p, init in enumerate(inits)]))
    tl_first, jd_first = first[:P], first[P:]
    cross = list(runner(_run_one,
                        [("tl", data, config, (r.phi, r.factors.W, r.factors.H), P + p)
                         for p, r in enumerate(jd_first)]
                        + [("jd", data, config, (r.phi, r.factors.W, r.factors.H), P + p)
                           for p, r in enumerate(tl_first)]))
    tl_runs = tl_first + cross[:P]
    jd_runs = jd_first + cross[P:]

    best_tl = tl_runs[_argmin([r.final.C for r in tl_runs])]

    jd_best_phi = jd_runs[_argmin([r.final.L for r in jd_runs])]
    phi_dot = jd_best_phi.phi
    factor_inits = [NmfFactors(W, H) for _, W, H in inits] + [r.factors for r in tl_first]
    V = Moments(phi_dot, data).V
    n_sweeps = config.J * config.J_NMF
    refits = list(runner(_refit_one, [(V, f, config.eps0, n_sweeps) for f in factor_inits]))
    scores = [is_div_reg(V, f.product(), config.eps0) for f in refits]
    k = _argmin(scores)
    best_factors = refits[k]
    WH = best_factors.product()
    best_jd = SolveResult(
        phi_dot,
        best_factors,
        jd_best_phi.trace + [_point(len(jd_best_phi.trace), V, WH, config.eps0, "refit")],
        init_id=jd_best_phi.init_id,
        method="jdnmf",
    )
    finals = [("tlnmf", r.init_id, r.final.C, r.final.L, r.final.I) for r in tl_runs]
    finals += [("jdnmf", r.init_id, r.final.C, r.final.L, r.final.I) for r in jd_runs]
    return MultiInitReport(best_tl, best_jd, finals, tl_runs, jd_runs)


def _run_one(args):
    kind, data, config, init, init_id = args
    solve = tlnmf_solve if kind == "tl" else jdnmf_solve
    return solve(data, config, init, init_id=init_id)


def _refit_one(args):
    V, factors, eps0, n_sweeps = args
    return mu_run(V, factors, eps0, n_sweeps)

