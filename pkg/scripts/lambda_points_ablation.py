"""Train with the point-regression weight switched off and print how test
point error and stop accuracy evolve.

    python3 scripts/lambda_points_ablation.py [--seed 42]
"""
import argparse

from adaptext.train import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    res = train(TrainConfig(seed=args.seed, lambda_points=0.0), write=False)
    print("epoch  point_error  stop_accuracy")
    for h in res.history:
        print(f"{h['epoch']:5d}  {h['test_point_error']:.4f}       {h['test_stop_accuracy']:.3f}")


if __name__ == "__main__":
    main()
