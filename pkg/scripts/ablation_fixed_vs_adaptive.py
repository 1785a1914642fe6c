"""Compare the adaptive decoder with a fixed-7-pair variant per pair count.

Both are trained with the same seed and schedule; the fixed variant
regresses every region resampled to 7 pairs and has no stop term.  Point
error is measured after resampling both prediction and ground truth to
the ground-truth pair count.

    python3 scripts/ablation_fixed_vs_adaptive.py [--seeds 42 1 2]
"""
import argparse

from adaptext.train import TrainConfig, point_error_on, split_dataset, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[42])
    ap.add_argument("--fixed-pairs", type=int, default=7)
    args = ap.parse_args()
    print("seed  pairs  n  adaptive  fixed")
    for seed in args.seeds:
        cfg = TrainConfig(seed=seed)
        adaptive = train(cfg, write=False).params
        fixed = train(TrainConfig(seed=seed, fixed_pairs=args.fixed_pairs), write=False).params
        _, test_set = split_dataset(cfg)
        for k in range(2, 8):
            subset = [r for r in test_set if r.num_pairs == k]
            if not subset:
                continue
            a = point_error_on(adaptive, subset, cfg.max_steps)
            f = point_error_on(fixed, subset, cfg.max_steps, fixed_pairs=args.fixed_pairs)
            print(f"{seed:4d}  {k:5d}  {len(subset):2d}  {a:.4f}    {f:.4f}")


if __name__ == "__main__":
    main()
