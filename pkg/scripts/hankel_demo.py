"""Compare ADMM on the rank-cap envelope with Cadzow on noisy rank-one signals.

Usage: python scripts/hankel_demo.py [trials] [seed]
"""
import sys

import numpy as np

from quadenv.lifting import RankCap
from quadenv.solvers import LeastSquaresProblem, solve_admm, solve_cadzow
from quadenv.suites import noisy_rank1_hankel, rank1_hankel_best


def main(trials=20, seed=0):
    rng = np.random.default_rng(int(seed))
    print("trial  admm_J        cadzow_J      best_rank1    admm_certified")
    wins = 0
    for t in range(int(trials)):
        D = noisy_rank1_hankel(rng)
        prob = LeastSquaresProblem(RankCap(1), D, prior="hankel")
        admm = solve_admm(prob)
        cad = solve_cadzow(prob)
        best = rank1_hankel_best(D)
        wins += admm.objective_gamma <= cad.objective_gamma + 1e-9
        print(f"{t:5d}  {admm.objective_gamma:.6e}  {cad.objective_gamma:.6e}  "
              f"{best:.6e}  {admm.certified}")
    print(f"ADMM at or below Cadzow in {wins}/{trials} trials")


if __name__ == "__main__":
    main(*sys.argv[1:])
