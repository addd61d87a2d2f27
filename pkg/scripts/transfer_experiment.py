"""Port a scroll FPS model between two devices with 18 representative pages.

Prints held-out relative error of the zero-shot base, the fine-tuned copy and
a network trained from scratch on the same pages, one line per seed.

    python3 scripts/transfer_experiment.py --base xiaomi9 --target odroidxu3 --seeds 5
"""

import argparse
import time

from camel.adapt import kmeans, page_points, select_representatives, transfer_train
from camel.corpus import Corpus, generate_corpus
from camel.device import get_device
from camel.harness import EvalConfig, feature_corpus, prepare
from camel.neural import TrainingConfig, mean_rel_error
from camel.predictors import build_fps_dataset, fit_network


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--base", default="xiaomi9")
    ap.add_argument("--target", default="odroidxu3")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--clusters", type=int, default=9)
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()

    cfg = EvalConfig()
    a, b = get_device(args.base), get_device(args.target)
    speeds = cfg.speeds["scroll"]
    pipeline, (fa, fb) = prepare([a, b], cfg)
    profiled = feature_corpus(cfg).subset(range(cfg.fps_pages))
    base = fit_network(build_fps_dataset(profiled, a, speeds, fa, "scroll", pipeline, configs=fa.configs),
                       cfg.fps_training)
    print("seed pages zero_shot transfer scratch seconds")
    for seed in range(args.seeds):
        pool = generate_corpus(100 + seed, 120, prefix="pool")
        test = generate_corpus(200 + seed, 40, prefix="test")
        pts = page_points(pipeline, pool.pages)
        reps = select_representatives(pts, [p.id for p in pool.pages], kmeans(pts, args.clusters, seed))
        ids = set(reps.pages())
        small = build_fps_dataset(Corpus(tuple(p for p in pool.pages if p.id in ids)), b, speeds, fb, "scroll",
                                  pipeline, configs=fb.configs)
        held = build_fps_dataset(test, b, speeds, fb, "scroll", pipeline, configs=fb.configs)
        tc = TrainingConfig(epochs=args.epochs, dtype="float32", seed=seed)
        t = time.perf_counter()
        tl = transfer_train(base, small, tc)
        took = time.perf_counter() - t
        scratch = fit_network(small, tc, seed=seed)
        print(seed, len(ids), *(f"{mean_rel_error(m, held):.4f}" for m in (base, tl, scratch)), f"{took:.1f}")


if __name__ == "__main__":
    main()
