"""A reduced version of the built-in AR(2) Monte Carlo study.

Usage: ``python demos/ar2_study.py [B] [workers]``. With B = 2000 this is the
full design; the default of 200 replications finishes in about a minute.
"""
import sys

import numpy as np

from tsfic.simulate import figure_checks, figure_design, run_mc

B = int(sys.argv[1]) if len(sys.argv) > 1 else 200
workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1
res = run_mc(figure_design("fig3", B=B), workers=workers)

np.set_printoptions(precision=3, suppress=True)
print("root-mse, rows C(0)..C(5), columns", res.labels)
print(res.rmse())
for comp in res.spec.comparators:
    print(f"{comp:>10} achieved {res.achieved_rmse(comp)}")
print("FIC picks an rmse-optimal model with frequency", res.optimal_pick_rate("FIC"))
for name, check in figure_checks(res).items():
    print(f"{'ok ' if check['pass'] else 'no '} {name}: {check['detail']}")
