"""Print the low spectrum of a random separated matrix Sturm-Liouville problem.

    python3 scripts/sl_spectrum.py --seed 3 --count 4
"""
import argparse

from polarsturm.instances import sl_problem
from polarsturm.sturm import eigenfunction_residuals, normalize, solve_eigenvalues


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--count", type=int, default=3, help="eigenvalues per branch")
    ap.add_argument("--h", type=float, default=1e-3)
    args = ap.parse_args()

    norm = normalize(sl_problem(args.seed, args.n))
    pairs = solve_eigenvalues(norm, ks=range(args.count), h=args.h, with_eigenfunctions=True)
    print(f"{'branch':>6} {'k':>3} {'l':>3} {'eigenvalue':>16} {'zeros':>5} {'residual':>9}")
    for p in sorted(pairs, key=lambda p: p.eigenvalue):
        res = eigenfunction_residuals(norm, p)
        worst = max(res.left, res.right, res.ode)
        print(f"{p.branch:>6} {p.k:>3} {p.l:>3} {p.eigenvalue:>16.10f} {p.zero_count:>5} {worst:>9.1e}")


if __name__ == "__main__":
    main()
