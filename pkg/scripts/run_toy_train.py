"""Train the toy decoder and print held-out metrics.

    python3 scripts/run_toy_train.py [--seed 42] [--out-dir toy_run] [--config file]
"""
import argparse
import json
import logging

from adaptext.train import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir:
        cfg.out_dir = args.out_dir
    result = train(cfg)
    print(json.dumps(result.final, indent=2))


if __name__ == "__main__":
    main()
