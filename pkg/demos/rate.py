"""Empirical power deviation at the true transform against its predicted rate.

Run with ``python demos/rate.py``.
"""
from tlnmf.experiments import cmd_rate

for r in cmd_rate(M=10, N=50, K_bar=5, S_grid=[10, 50, 100, 500, 1000], trials=20):
    print(f"S={r.S:5d}  mean Q/(MN)={r.mean_q:.5f}  predicted={r.predicted:.5f}  "
          f"ratio={r.mean_q / r.predicted:.3f}")
