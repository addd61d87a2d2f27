"""Held-out QoE error against the number of hidden layers, per gesture.

    python3 scripts/layer_sweep.py --layers 1 3 5 7 9 --user mod
"""

import argparse
from dataclasses import replace

from camel.corpus import generate_corpus
from camel.device import group_users
from camel.harness import EvalConfig, prepare
from camel.neural import mean_rel_error
from camel.predictors import ModelShape, build_qoe_dataset, fit_network


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--layers", type=int, nargs="+", default=[1, 3, 5, 7, 9, 11, 14])
    ap.add_argument("--width", type=int, default=260)
    ap.add_argument("--user", default="mod")
    ap.add_argument("--pages", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = EvalConfig(seed=args.seed)
    pipeline, _ = prepare([], cfg)
    user = group_users(args.user, args.seed)[0]
    corpus = generate_corpus(args.seed, args.pages)
    cut = int(0.8 * len(corpus))
    train = build_qoe_dataset(corpus.subset(range(cut)), user, cfg.speeds, pipeline)
    test = build_qoe_dataset(corpus.subset(range(cut, len(corpus))), user, cfg.speeds, pipeline)
    tc = replace(cfg.qoe_training, epochs=args.epochs, seed=args.seed)
    print("layers", *train)
    for n in args.layers:
        shape = ModelShape(n, args.width)
        errs = [mean_rel_error(fit_network(train[g], tc, shape, args.seed), test[g]) for g in train]
        print(n, *(f"{e:.4f}" for e in errs))


if __name__ == "__main__":
    main()
