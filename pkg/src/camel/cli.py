"""Command line entry point: ``camel <verb> [<action>] [options]``.

Every verb prints one JSON summary line on stdout. Exit status is 0 on
success, 2 on a usage error and 1 when the run itself fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from camel.adapt import page_points, select_k, select_representatives, transfer_train
from camel.conformal import continuous_update, fit_cp, flag_inputs, load_cp, predict_intervals, save_cp, write_flag_log
from camel.corpus import Corpus, generate_corpus, ingest_html_dir, load_corpus, save_corpus
from camel.device import DEVICE_PRESETS, USER_GROUPS, UserModel, default_user, get_device, user_presets
from camel.errors import CamelError, ConfigurationError
from camel.features import FeaturePipeline, fit_pipeline
from camel.harness import (
    SCALE_ALIASES, SCALE_PROFILES, evaluate, feature_corpus, representative_users, save_report, scale_profile,
)
from camel.predictors import (
    GestureModel, build_fps_dataset, build_qoe_dataset, cell_viewport, load_bundle, save_bundle,
    train_fps_predictor, train_qoe_predictor,
)
from camel.records import iter_records, read_header, write_records
from camel.search import build_frontier, load_frontier, save_frontier

SEED_ENV = "CAMEL_SEED"
REPS_FORMAT = "camel-representatives"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    device: str = "xiaomi9"
    corpus: str | None = None
    model: str | None = None
    frontier: str | None = None
    report: str | None = None
    scale: str = "desk"
    jobs: int = 1


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Explicit flags over the config file, the file over CAMEL_SEED, then defaults."""
    merged: dict = {}
    if args.seed is None and environ.get(SEED_ENV):
        try:
            merged["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        names = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown config keys {unknown}; expected {sorted(names)}")
        merged.update(data)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    cfg = RunConfig(**merged)
    if cfg.scale not in SCALE_PROFILES and cfg.scale not in SCALE_ALIASES:
        raise ConfigurationError(f"scale must be one of {sorted(SCALE_PROFILES)}, got {cfg.scale!r}")
    if cfg.jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {cfg.jobs}")
    return cfg


def resolve_user(name: str, seed: int = 0) -> UserModel:
    """``default``, a rater id such as ``mod-03``, or a group name (its first rater)."""
    if name == "default":
        return default_user()
    users = user_presets(seed)
    if name in USER_GROUPS:
        return next(u for u in users if u.group == name)
    for u in users:
        if u.user_id == name:
            return u
    raise ConfigurationError(f"unknown user {name!r}; use default, a group {list(USER_GROUPS)} or a rater id")


def resolve_users(preset: str, seed: int = 0) -> list[UserModel]:
    """``groups`` (one rater per group), ``all``, a group name, or comma-separated rater ids."""
    if preset == "groups":
        return representative_users(seed)
    if preset == "all":
        return user_presets(seed)
    if preset in USER_GROUPS:
        return [u for u in user_presets(seed) if u.group == preset]
    return [resolve_user(n, seed) for n in preset.split(",")]


def resolve_devices(names: str) -> list:
    if names == "all":
        return [DEVICE_PRESETS[n] for n in sorted(DEVICE_PRESETS)]
    return [get_device(n) for n in names.split(",")]


def _need(value, flag: str):
    if value is None:
        raise ConfigurationError(f"{flag} is required")
    return value


def _corpus(cfg: RunConfig) -> Corpus:
    return load_corpus(_need(cfg.corpus, "--corpus"))


def _pipeline(cfg: RunConfig) -> FeaturePipeline:
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    return fit_pipeline(feature_corpus(ev).pages[:ev.feature_pages], out_dim=ev.out_dim)


def _frontier(cfg: RunConfig, device):
    if cfg.frontier:
        return load_frontier(cfg.frontier)
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    return build_frontier(device, feature_corpus(ev).pages[:ev.frontier_pages], ev.speeds)


def _emit(summary: dict) -> int:
    print(json.dumps(summary, sort_keys=True))
    return 0


# --- verbs -------------------------------------------------------------------

def cmd_corpus(args, cfg: RunConfig) -> int:
    out = _need(args.out, "--out")
    if args.action == "gen":
        corpus = generate_corpus(cfg.seed, args.pages)
    else:
        corpus = ingest_html_dir(_need(args.html_dir, "--html-dir"), args.viewport_height)
        if len(corpus) == 0:
            raise ConfigurationError(f"no .html files under {args.html_dir}")
    save_corpus(corpus, out)
    return _emit({"verb": f"corpus {args.action}", "pages": len(corpus), "out": str(out)})


def cmd_frontier(args, cfg: RunConfig) -> int:
    device = get_device(cfg.device)
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    pages = feature_corpus(replace(ev, frontier_pages=args.pages or ev.frontier_pages)).pages
    frontier = build_frontier(device, pages[:args.pages or ev.frontier_pages], ev.speeds)
    save_frontier(frontier, _need(args.out, "--out"))
    return _emit({"verb": "frontier build", "device": device.name, "configs": len(frontier), "out": str(args.out)})


def cmd_train(args, cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    pipeline = _pipeline(cfg)
    out = _need(args.out, "--out")
    if args.kind == "qoe":
        user = resolve_user(args.user, cfg.seed)
        data = build_qoe_dataset(corpus, user, ev.speeds, pipeline, ev.gestures)
        train_cfg = replace(ev.qoe_training, seed=cfg.seed)
        if args.epochs is not None:
            train_cfg = replace(train_cfg, epochs=args.epochs)
        pred = train_qoe_predictor(data, pipeline, train_cfg, ev.shape, cfg.seed)
        save_bundle(out, "qoe", pred.models, user=user.user_id, seed=cfg.seed)
    else:
        device = get_device(cfg.device)
        frontier = _frontier(cfg, device)
        data = {g: build_fps_dataset(corpus, device, ev.speeds[g], frontier, g, pipeline, configs=frontier.configs)
                for g in ev.gestures}
        train_cfg = replace(ev.fps_training, seed=cfg.seed)
        if args.epochs is not None:
            train_cfg = replace(train_cfg, epochs=args.epochs)
        pred = train_fps_predictor(data, pipeline, device, train_cfg, ev.shape, cfg.seed)
        save_bundle(out, "fps", pred.models, device=device.name, seed=cfg.seed)
    return _emit({"verb": "train", "kind": args.kind, "samples": {g: len(d) for g, d in sorted(data.items())},
                  "out": str(out)})


def cmd_evaluate(args, cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    devices = resolve_devices(cfg.device)
    users = resolve_users(args.users, cfg.seed)
    ev = scale_profile(cfg.scale, seed=cfg.seed, jobs=cfg.jobs)
    report = evaluate(corpus, devices, users, args.folds, ev)
    out = _need(cfg.report, "--out")
    save_report(report, out)
    top = {k: {"saving": v["saving"], "violation": v["violation"]}
           for k, v in report.aggregates.items() if "/" not in k}
    return _emit({"verb": "evaluate", "rows": len(report.rows), "smoke": report.smoke, "aggregates": top,
                  "out": str(out)})


def cmd_adapt(args, cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    out = _need(args.out, "--out")
    if args.action == "select":
        pipeline = next(iter(load_bundle(cfg.model)[1].values())).pipeline if cfg.model else _pipeline(cfg)
        points = page_points(pipeline, corpus.pages)
        clustering = select_k(points, range(args.k_min, args.k_max + 1), cfg.seed)
        reps = select_representatives(points, [p.id for p in corpus.pages], clustering)
        recs = ({"cluster": j, "centroid_page": a, "frontier_page": b, "duplicated": d}
                for j, ((a, b), d) in enumerate(zip(reps.pairs, reps.duplicated)))
        write_records(out, REPS_FORMAT, recs, k=clustering.k, seed=cfg.seed)
        return _emit({"verb": "adapt select", "k": clustering.k, "pages": len(reps), "out": str(out)})
    head, models = load_bundle(_need(cfg.model, "--model"))
    if head.get("kind") != "fps":
        raise ConfigurationError("adapt transfer ports an FPS model bundle")
    read_header(_need(args.reps, "--pages"), REPS_FORMAT)
    wanted = {i for r in iter_records(args.reps, REPS_FORMAT) for i in (r["centroid_page"], r["frontier_page"])}
    small = Corpus(tuple(p for p in corpus.pages if p.id in wanted), corpus.seed)
    missing = wanted - {p.id for p in small.pages}
    if missing:
        raise ConfigurationError(f"representative pages missing from the corpus: {sorted(missing)[:5]}")
    device = get_device(cfg.device)
    frontier = _frontier(cfg, device)
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    train_cfg = replace(ev.fps_training, seed=cfg.seed, epochs=args.epochs)
    ported = {}
    for g, m in sorted(models.items()):
        data = build_fps_dataset(small, device, ev.speeds[g], frontier, g, m.pipeline, configs=frontier.configs)
        ported[g] = GestureModel(transfer_train(m.network, data, train_cfg), m.pipeline)
    save_bundle(out, "fps", ported, device=device.name, seed=cfg.seed, base_device=head.get("device"))
    return _emit({"verb": "adapt transfer", "device": device.name, "pages": len(small), "out": str(out)})


def _qoe_cells(corpus: Corpus, gesture: str, speeds):
    return [(p, cell_viewport(p, si).start_px, gesture, float(s)) for p in corpus.pages for si, s in enumerate(speeds)]


def cmd_cp(args, cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    user = resolve_user(args.user, cfg.seed)
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    if args.action == "fit":
        head, models = load_bundle(_need(cfg.model, "--model"))
        if head.get("kind") != "qoe":
            raise ConfigurationError("cp fit needs a QoE model bundle")
        m = models.get(args.gesture)
        if m is None:
            raise ConfigurationError(f"model bundle has no {args.gesture!r} model")
        data = build_qoe_dataset(corpus, user, ev.speeds, m.pipeline, (args.gesture,))[args.gesture]
        half = len(data) // 2
        if half == 0:
            raise ConfigurationError("cp fit needs at least two labelled samples")
        cp = fit_cp(m.network, data.subset(range(half)), data.subset(range(half, len(data))),
                    epsilon=args.epsilon, distance_aware=args.distance_aware)
        out = _need(args.out, "--out")
        save_cp(out, cp, gesture=args.gesture, user=user.user_id, pipeline=m.pipeline.to_dict())
        return _emit({"verb": "cp fit", "beta": cp.beta, "calibration": len(cp.calibration_scores),
                      "out": str(out)})
    head, cp = load_cp(_need(args.cp, "--cp"))
    pipeline = FeaturePipeline.from_dict(head["pipeline"])
    gesture = head["gesture"]
    data = build_qoe_dataset(corpus, user, ev.speeds, pipeline, (gesture,))[gesture]
    center, half = predict_intervals(cp, data.inputs, args.epsilon)
    coverage = float(np.mean(np.abs(data.targets - center) <= half)) if len(data) else float("nan")
    suspect = float(np.mean(half / center > 0.2)) if len(data) else float("nan")
    return _emit({"verb": "cp eval", "samples": len(data), "coverage": coverage, "suspect_rate": suspect})


def cmd_continuous(args, cfg: RunConfig) -> int:
    corpus = _corpus(cfg)
    user = resolve_user(args.user, cfg.seed)
    head, cp = load_cp(_need(args.cp, "--cp"))
    pipeline = FeaturePipeline.from_dict(head["pipeline"])
    gesture = head["gesture"]
    ev = scale_profile(cfg.scale, seed=cfg.seed)
    flagged = flag_inputs(cp, pipeline, _qoe_cells(corpus, gesture, ev.speeds[gesture]))
    if args.log:
        write_flag_log(args.log, flagged)
    train_cfg = replace(ev.qoe_training, seed=cfg.seed, epochs=args.epochs)
    result = continuous_update(cp, cp.h, flagged, user, cp.proper_train, train_cfg)
    out = _need(args.out, "--out")
    save_cp(out, result.cp, **{k: v for k, v in head.items() if k not in ("format", "version")})
    return _emit({"verb": "continuous", "flagged": len(flagged), "added": len(result.added),
                  "skipped": len(result.skipped), "out": str(out)})


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help=f"run seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--config", help="JSON file of RunConfig fields; explicit flags win")
    common.add_argument("--scale", choices=sorted(SCALE_PROFILES) + sorted(SCALE_ALIASES),
                        help="grid and training profile (desk or full)")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--device", help="device preset name (evaluate: comma list or 'all')")

    parser = argparse.ArgumentParser(prog="camel", description="QoE-aware energy optimisation for web browsing")
    verbs = parser.add_subparsers(dest="verb", required=True, metavar="verb")

    corpus = verbs.add_parser("corpus", help="generate or ingest a page corpus")
    corpus_act = corpus.add_subparsers(dest="action", required=True)
    gen = corpus_act.add_parser("gen", parents=[common])
    gen.add_argument("--pages", type=int, default=40)
    gen.add_argument("--out")
    ingest = corpus_act.add_parser("ingest", parents=[common])
    ingest.add_argument("--html", "--html-dir", dest="html_dir")
    ingest.add_argument("--viewport-height", type=int, default=2000)
    ingest.add_argument("--out")

    frontier = verbs.add_parser("frontier", help="profile a device and keep its Pareto frontier")
    frontier_act = frontier.add_subparsers(dest="action", required=True)
    fb = frontier_act.add_parser("build", parents=[common])
    fb.add_argument("--pages", type=int, help="profiling pages (default: the scale profile's)")
    fb.add_argument("--out")

    train = verbs.add_parser("train", parents=[common], help="train a QoE or FPS predictor bundle")
    train.add_argument("--kind", choices=("qoe", "fps"), required=True)
    train.add_argument("--corpus")
    train.add_argument("--frontier")
    train.add_argument("--user", "--user-group", dest="user", default="default")
    train.add_argument("--epochs", type=int)
    train.add_argument("--out")

    ev = verbs.add_parser("evaluate", parents=[common], help="cross-validated camel/oracle/baseline sessions")
    ev.add_argument("--corpus")
    ev.add_argument("--users", "--user-group", dest="users", default="groups",
                    help="groups, all, a group name or comma-separated rater ids")
    ev.add_argument("--folds", type=int, default=5)
    ev.add_argument("--out", dest="report")

    adapt = verbs.add_parser("adapt", help="pick representative pages or port a model")
    adapt_act = adapt.add_subparsers(dest="action", required=True)
    sel = adapt_act.add_parser("select", parents=[common])
    sel.add_argument("--corpus")
    sel.add_argument("--model", help="bundle whose feature pipeline embeds the pages")
    sel.add_argument("--k-min", type=int, default=2)
    sel.add_argument("--kmax", "--k-max", dest="k_max", type=int, default=15)
    sel.add_argument("--out")
    tr = adapt_act.add_parser("transfer", parents=[common])
    tr.add_argument("--corpus")
    tr.add_argument("--base", "--model", dest="model")
    tr.add_argument("--frontier")
    tr.add_argument("--pages", "--reps", dest="reps")
    tr.add_argument("--epochs", type=int, default=20)
    tr.add_argument("--out")

    cp = verbs.add_parser("cp", help="conformal error bounds for a QoE model")
    cp_act = cp.add_subparsers(dest="action", required=True)
    fit = cp_act.add_parser("fit", parents=[common])
    fit.add_argument("--corpus")
    fit.add_argument("--model")
    fit.add_argument("--gesture", default="scroll")
    fit.add_argument("--user", "--user-group", dest="user", default="default")
    fit.add_argument("--epsilon", type=float, default=0.1)
    fit.add_argument("--distance-aware", action="store_true")
    fit.add_argument("--out")
    cpe = cp_act.add_parser("eval", parents=[common])
    cpe.add_argument("--corpus")
    cpe.add_argument("--cp")
    cpe.add_argument("--user", "--user-group", dest="user", default="default")
    cpe.add_argument("--epsilon", type=float)

    cont = verbs.add_parser("continuous", parents=[common], help="flag suspect inputs and update the QoE model")
    cont.add_argument("--corpus")
    cont.add_argument("--cp")
    cont.add_argument("--user", "--user-group", dest="user", default="default")
    cont.add_argument("--epochs", type=int, default=20)
    cont.add_argument("--log")
    cont.add_argument("--out")
    return parser


COMMANDS = {
    "corpus": cmd_corpus, "frontier": cmd_frontier, "train": cmd_train, "evaluate": cmd_evaluate,
    "adapt": cmd_adapt, "cp": cmd_cp, "continuous": cmd_continuous,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.verb](args, cfg)
    except (CamelError, ValueError, OSError, KeyError) as exc:
        print(f"camel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
