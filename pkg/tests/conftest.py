import numpy as np
import pytest

from tlnmf.core import NmfFactors, polar_project
from tlnmf.datagen import GcmSpec, gen_gcm


def rand_orth(rng, M):
    return polar_project(rng.standard_normal((M, M)))


def rand_antisym(rng, M, scale=1.0):
    A = rng.standard_normal((M, M)) * scale
    return A - A.T


def rand_factors(rng, M, K, N, scale=1.0):
    W = rng.random((M, K)) + 0.05
    W /= W.sum(axis=0)
    H = (rng.random((K, N)) + 0.05) * scale
    return NmfFactors(W, H)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_gcm():
    return gen_gcm(GcmSpec(M=6, N=8, K_bar=3, S=4, seed=7))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
