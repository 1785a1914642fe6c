"""Gradient-check relative error across seeds and finite-difference steps.

    python3 scripts/grad_check_sweep.py [--seeds 0 1 2 3 4] [--hidden 32]
"""
import argparse

from adaptext.cli import run_grad_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--epsilons", type=float, nargs="+", default=[1e-4, 1e-5, 1e-6])
    args = ap.parse_args()
    print("seed  epsilon  max_rel_error  param")
    for seed in args.seeds:
        for eps in args.epsilons:
            res = run_grad_check(seed, args.hidden, args.steps, epsilon=eps)
            print(f"{seed:4d}  {eps:.0e}    {res.max_rel_error:.3e}      {res.param}{list(res.index)}")


if __name__ == "__main__":
    main()
