import numpy as np
import pytest

from tlnmf.core import ContractError, NmfFactors, NumericalError, RealizationSet, SolverConfig, orthogonality_error
from tlnmf.datagen import GcmSpec, gen_gcm
from tlnmf.objectives import Moments, is_div_reg, log_power_sum, objective_C
from tlnmf.solvers import init_seeds, jdnmf_solve, multi_init, random_init, tlnmf_solve

from tlnmf.qn import exp_retraction

from conftest import rand_antisym, rand_orth

CFG = SolverConfig(K=3, eps0=1e-6, J=6, J_TL=2, J_NMF=3, P=2, seed=0)


def _diffs(values):
    return np.diff(np.asarray(values))


@pytest.mark.parametrize("solve", [tlnmf_solve, jdnmf_solve])
def test_zero_iterations_return_init(small_gcm, solve):
    data, _ = small_gcm
    init = random_init(data, 3, 1)
    r = solve(data, CFG.replace(J=0), init)
    np.testing.assert_array_equal(r.phi, init[0])
    np.testing.assert_array_equal(r.factors.W, init[1])
    np.testing.assert_array_equal(r.factors.H, init[2])
    assert len(r.trace) == 1


@pytest.mark.parametrize("seed", range(5))
def test_tlnmf_monotone_substeps(small_gcm, seed):
    data, _ = small_gcm
    r = tlnmf_solve(data, CFG, random_init(data, 3, seed), substeps=True)
    assert len(r.trace) == 1 + CFG.J * (CFG.J_NMF + CFG.J_TL)
    C = [p.C for p in r.trace]
    assert np.all(_diffs(C) <= 1e-10 * np.abs(C[:-1]).clip(1))
    assert orthogonality_error(r.phi) <= 1e-8
    r.factors.check()


@pytest.mark.parametrize("seed", range(5))
def test_jdnmf_monotone_phases(small_gcm, seed):
    data, _ = small_gcm
    r = jdnmf_solve(data, CFG, random_init(data, 3, seed), substeps=True)
    jd = [p.L for p in r.trace if p.phase in ("init", "jd")]
    mu = [p.I for p in r.trace if p.phase == "mu"]
    assert len(jd) == 1 + CFG.J * CFG.J_TL and len(mu) == CFG.J * CFG.J_NMF
    assert np.all(_diffs(jd) <= 1e-10 * np.abs(jd[:-1]).clip(1))
    assert np.all(_diffs(mu) <= 1e-10 * np.abs(mu[:-1]).clip(1))


@pytest.mark.parametrize("solve", [tlnmf_solve, jdnmf_solve])
def test_trace_decomposition(small_gcm, solve):
    data, _ = small_gcm
    r = solve(data, CFG, random_init(data, 3, 4))
    for p in r.trace:
        assert abs(p.C - (p.L + p.I)) <= 1e-10 * max(1.0, abs(p.C))
    assert np.isclose(r.final.C, objective_C(r.phi, r.factors, data, CFG.eps0), rtol=1e-12)


def test_jdnmf_converges_on_diagonalizable_data():
    # realizations with orthonormal coordinates across s make every sample
    # covariance exactly diagonal in the basis phi_bar
    rng = np.random.default_rng(2)
    M, N, S = 5, 12, 3
    phi_bar = rand_orth(rng, M)
    Q = np.linalg.qr(rng.standard_normal((S, S)))[0]
    Y = np.empty((S, M, N))
    for n in range(N):
        coords = np.zeros((S, M))
        coords[:, :S] = Q * (rng.random(S) + 0.2)
        Y[:, :, n] = coords @ phi_bar
    data = RealizationSet(Y)
    cfg = SolverConfig(K=2, eps0=1e-9, J=100, J_TL=1, J_NMF=1, P=1)
    _, W0, H0 = random_init(data, 2, 0)
    phi0 = exp_retraction(phi_bar, rand_antisym(rng, M, scale=0.05))

    def off(phi):
        C = phi @ data.gram @ phi.T
        return np.sum(C**2) - np.sum(np.einsum("naa->na", C) ** 2)

    r = jdnmf_solve(data, cfg, (phi0, W0, H0))
    assert off(r.phi) <= 1e-8 * off(phi0)


def test_multi_init_single_start(small_gcm):
    data, _ = small_gcm
    rep = multi_init(data, CFG.replace(P=1))
    assert [r.init_id for r in rep.tlnmf_runs] == [0, 1]
    assert [r.init_id for r in rep.jdnmf_runs] == [0, 1]
    assert len(rep.all_final_objectives) == 4
    # the cross-seeded TL run starts at the JD run's final triple
    tl_cross = rep.tlnmf_runs[1]
    jd0 = rep.jdnmf_runs[0]
    V = Moments(jd0.phi, data).V
    assert np.isclose(tl_cross.trace[0].C, objective_C(jd0.phi, jd0.factors, data, CFG.eps0), rtol=1e-12)
    assert np.isclose(tl_cross.trace[0].L, log_power_sum(V, CFG.eps0), rtol=1e-12)


def test_multi_init_selection(small_gcm):
    data, _ = small_gcm
    rep = multi_init(data, CFG.replace(P=3))
    assert len(rep.tlnmf_runs) == len(rep.jdnmf_runs) == 6
    assert all(rep.best_tlnmf.final.C <= r.final.C for r in rep.tlnmf_runs)
    assert all(rep.best_jdnmf.final.L <= r.final.L for r in rep.jdnmf_runs)
    # refit picks the best factors on the selected transform
    V = Moments(rep.best_jdnmf.phi, data).V
    best_I = is_div_reg(V, rep.best_jdnmf.factors.product(), CFG.eps0)
    assert np.isclose(best_I, rep.best_jdnmf.final.I, rtol=1e-12)
    assert best_I <= min(r.final.I for r in rep.jdnmf_runs if r.phi is rep.best_jdnmf.phi) + 1e-9


def test_multi_init_deterministic_with_map_like_runner(small_gcm):
    data, _ = small_gcm
    a = multi_init(data, CFG)
    b = multi_init(data, CFG, runner=lambda f, xs: [f(x) for x in xs])
    assert a.all_final_objectives == b.all_final_objectives


def test_random_init_feasible_and_deterministic(small_gcm):
    data, _ = small_gcm
    phi, W, H = random_init(data, 3, 11)
    assert orthogonality_error(phi) <= 1e-12
    np.testing.assert_allclose(W.sum(axis=0), 1, rtol=1e-14)
    assert (W >= 0).all() and (H >= 0).all()
    assert np.isclose((W @ H).mean(), Moments(phi, data).V.mean())
    again = random_init(data, 3, 11)
    for x, y in zip((phi, W, H), again):
        np.testing.assert_array_equal(x, y)


def test_random_init_audit():
    data, _ = gen_gcm(GcmSpec(S=1, seed=0))
    for s in range(1000):
        phi, W, H = random_init(data, 5, s)
        assert np.isfinite(objective_C(phi, NmfFactors(W, H), data, 1e-8))


def test_init_seeds_distinct():
    seeds = init_seeds(0, 50)
    assert len(set(seeds)) == 50
    assert seeds == init_seeds(0, 50)


def test_infeasible_init(small_gcm):
    data, _ = small_gcm
    phi, W, H = random_init(data, 3, 0)
    with pytest.raises(ContractError):
        tlnmf_solve(data, CFG, (phi * 1.01, W, H))
    with pytest.raises(ContractError):
        jdnmf_solve(data, CFG, (phi, W * 2, H))
    with pytest.raises(ContractError):
        tlnmf_solve(data, CFG, (phi, W, H[:, :-1]))


def test_overflow_raises_numerical_error():
    Y = np.full((1, 3, 4), 1e200)
    data = RealizationSet(Y)
    phi, W, H = random_init(RealizationSet(np.ones((1, 3, 4))), 2, 0)
    with pytest.raises(NumericalError) as info:
        with np.errstate(over="ignore", invalid="ignore"):
            tlnmf_solve(data, CFG, (phi, W, H))
    assert info.value.iteration == 0


def test_identifiability_large_S():
    data, truth = gen_gcm(GcmSpec(S=5000, seed=0))
    cfg = SolverConfig.gcm()
    r = tlnmf_solve(data, cfg, random_init(data, cfg.K, 0))
    match = np.abs(truth.phi_bar @ r.phi.T).max(axis=1)
    assert match.min() >= 0.95
