"""Tabulate tau-crossings of Q2 against the number of eigenvalues below a level.

Shows both the plain equality and the version corrected by the number of
branches that start above their limiting level.

    python3 scripts/count_identity.py --seeds 10 --lower-start
"""
import argparse

import numpy as np

from polarsturm.errors import NumericalError
from polarsturm.instances import sl_problem
from polarsturm.sturm import count_report, normalize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--lower-start", action="store_true",
                    help="use instances whose initial angles lie in (-pi/2, 0)")
    args = ap.parse_args()

    print(f"{'seed':>4} {'level':>7} {'cross':>5} {'eigs':>4} {'upper':>5} {'plain':>5} {'corr':>5}")
    for seed in range(args.seeds):
        level = float(np.random.default_rng(seed).uniform(0.0, 8.0))
        norm = normalize(sl_problem(seed, lower_start=args.lower_start))
        try:
            rep = count_report(norm, level)
        except NumericalError as exc:
            print(f"{seed:>4} {level:>7.3f}  {exc}")
            continue
        print(f"{seed:>4} {level:>7.3f} {rep.crossings:>5} {rep.eigen_count:>4} "
              f"{rep.upper_starts:>5} {str(rep.equal):>5} {str(rep.corrected_equal):>5}")


if __name__ == "__main__":
    main()
