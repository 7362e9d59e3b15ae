"""Learn atoms on the two-note signal and fit a cosine to the strongest ones.

Run with ``python demos/notes_atoms.py [S]``. A single run per solver,
about a few seconds each; the CLI ``tlnmf atoms`` does the full
multi-initialization.
"""
import sys

from tlnmf.core import SolverConfig
from tlnmf.datagen import NotesSpec, gen_notes
from tlnmf.experiments import harmonic_regression, top_atoms
from tlnmf.solvers import jdnmf_solve, random_init, tlnmf_solve

S = int(sys.argv[1]) if len(sys.argv) > 1 else 100
data = gen_notes(NotesSpec(S=S, seed=0))
cfg = SolverConfig.notes()
init = random_init(data, cfg.K, seed=0)
for name, solve in (("TL-NMF", tlnmf_solve), ("JD+NMF", jdnmf_solve)):
    res = solve(data, cfg, init)
    idx, _ = top_atoms(res.phi, data)
    fits = [harmonic_regression(res.phi[k], data.meta["f0"]) for k in idx]
    print(f"{name} (S={S}):")
    print("  " + "  ".join(f"{f.f:7.2f}/{f.error:.3f}" for f in fits))
