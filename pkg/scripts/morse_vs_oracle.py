"""Compare the angle-based Morse index with the negative count of a discretized form.

    python3 scripts/morse_vs_oracle.py --seeds 20 --m 400
"""
import argparse

from polarsturm.errors import BoundaryDegenerateError
from polarsturm.instances import morse_problem
from polarsturm.morse import discretize_quadratic_form, morse_index, morse_track, singular_margin


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--m", type=int, default=400, help="number of interior grid points")
    ap.add_argument("--margin", type=float, default=0.1,
                    help="skip problems whose end angle is closer than this to a singular level")
    args = ap.parse_args()

    print(f"{'seed':>4} {'n':>2} {'t':>7} {'margin':>7} {'mu':>3} {'oracle':>6}  status")
    mismatches = 0
    for seed in range(args.seeds):
        problem = morse_problem(seed)
        margin = singular_margin(morse_track(problem).phi[-1])
        head = f"{seed:>4} {problem.model.n:>2} {problem.t:>7.3f} {margin:>7.3f}"
        if margin < args.margin:
            print(f"{head} {'-':>3} {'-':>6}  skipped")
            continue
        try:
            mu = morse_index(problem).mu
        except BoundaryDegenerateError:
            print(f"{head} {'-':>3} {'-':>6}  singular end")
            continue
        oracle = discretize_quadratic_form(problem, args.m).negative_count()
        ok = mu == oracle
        mismatches += not ok
        print(f"{head} {mu:>3} {oracle:>6}  {'ok' if ok else 'MISMATCH'}")
    print(f"mismatches: {mismatches}")


if __name__ == "__main__":
    main()
