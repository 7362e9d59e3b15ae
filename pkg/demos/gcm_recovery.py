"""Recover a DCT transform from GCM data, and compare with joint diagonalization.

Run with ``python demos/gcm_recovery.py``. Takes a few seconds.
"""
import numpy as np

from tlnmf.core import SolverConfig
from tlnmf.datagen import GcmSpec, gen_gcm
from tlnmf.solvers import jdnmf_solve, random_init, tlnmf_solve

cfg = SolverConfig.gcm()
for S in (10, 1000):
    data, truth = gen_gcm(GcmSpec(S=S, seed=0))
    init = random_init(data, cfg.K, seed=1)
    tl = tlnmf_solve(data, cfg, init)
    jd = jdnmf_solve(data, cfg, init)
    for name, res in (("TL-NMF", tl), ("JD+NMF", jd)):
        # best match of each true row among the learned rows
        match = np.abs(truth.phi_bar @ res.phi.T).max(axis=1)
        print(f"S={S:5d} {name}: C={res.final.C:.3f} I={res.final.I:.4f} "
              f"worst row match={match.min():.4f}")
