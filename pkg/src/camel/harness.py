"""Interaction sessions, energy/QoE metrics and the cross-validation runner.

A session replays one gesture over a page in 50 ms scheduling windows.
``camel`` mode predicts a QoE target per window and searches the frontier,
``baseline`` pins a max-frequency governor setting, and ``oracle`` picks the
violation-then-energy optimal frontier schedule with ground-truth knowledge.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from camel.corpus import (
    GESTURES, SCHEDULING_WINDOW_S, Corpus, Gesture, PageDescriptor, ViewportSlice, future_viewport,
    generate_corpus,
)
from camel.device import (
    PLACEMENTS, ConfigArrays, DeviceModel, UserModel, fps_vector, group_users, power_vector,
)
from camel.errors import ConfigurationError, DomainError
from camel.features import FeaturePipeline, fit_pipeline
from camel.neural import TrainingConfig
from camel.predictors import (
    DEFAULT_SPEEDS, FpsPredictor, ModelShape, QoeInput, QoePredictor, build_fps_dataset, build_qoe_dataset,
    predict_min_fps, train_fps_predictor, train_qoe_predictor,
)
from camel.search import ConfigFrontier, build_frontier, search_predicted

MODES = ("camel", "baseline", "oracle")


def shifted_geomean(values) -> float:
    """exp(mean(log(1 + v))) - 1; defined for every v > -1, including zeros and negatives."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return 0.0
    return float(math.expm1(np.mean(np.log1p(v))))


@dataclass(frozen=True)
class SessionMetrics:
    page_id: str
    gesture: str
    speed: float
    user: str
    device: str
    mode: str
    target_scale: float
    energy_j: float
    baseline_energy_j: float
    saving: float
    fps_trace: tuple
    fps_min: float
    delta: int
    violation: float
    violation_fraction: float
    met_windows: int            # windows whose config was expected to meet the target

    @property
    def key(self) -> tuple:
        return (self.page_id, self.gesture, self.speed, self.user, self.device, self.mode, self.target_scale)


@dataclass(frozen=True)
class Predictors:
    qoe: QoePredictor
    fps: FpsPredictor


@dataclass(frozen=True)
class _Window:
    current: ViewportSlice
    shown: ViewportSlice        # slice on screen during the window
    threshold: float            # the user's true minimum acceptable FPS


def session_windows(page: PageDescriptor, gesture: Gesture, user: UserModel,
                    window_s: float = SCHEDULING_WINDOW_S) -> list[_Window]:
    n = max(1, int(round(gesture.duration / window_s)))
    offset = 0.0
    out = []
    for _ in range(n):
        cur = page.slice_at(offset)
        shown = future_viewport(page, offset, gesture, window_s)
        out.append(_Window(cur, shown, user.threshold(shown, gesture.kind, gesture.speed)))
        if gesture.kind != "pinch":
            offset = min(page.page_height_px - 1.0, offset + gesture.speed * window_s)
    return out


def _metrics(page, gesture, user, device, mode, scale, fps, energy, base_energy, thresholds, met):
    fps = np.asarray(fps, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    delta = int(np.sum(fps < thr))
    fps_min = float(np.mean(thr))
    e, b = float(np.sum(energy)), float(np.sum(base_energy))
    return SessionMetrics(
        page.id, gesture.kind, float(gesture.speed), user.user_id, device.name, mode, float(scale),
        e, b, 1.0 - e / b, tuple(float(v) for v in fps), fps_min, delta, delta / fps_min,
        delta / len(fps), int(met),
    )


def _window_oracle(device, page, gesture, w: _Window, ca: ConfigArrays):
    """True FPS per config for each previous render cluster, and true power per config."""
    fps = {prev: fps_vector(device, page, w.shown, gesture.kind, gesture.speed, ca, prev)
           for prev in (None,) + PLACEMENTS}
    power = power_vector(device, page, w.shown, gesture.kind, gesture.speed, ca)
    return fps, power


def _baseline_trace(device, page, gesture, windows, window_s, cache):
    key = ("b", id(device), page.id, gesture, window_s)
    if key not in cache:
        cfg = device.baseline_config()
        ca = ConfigArrays.of([cfg])
        fps, energy, prev = [], [], None
        for w in windows:
            fps.append(float(fps_vector(device, page, w.shown, gesture.kind, gesture.speed, ca, prev)[0]))
            energy.append(float(power_vector(device, page, w.shown, gesture.kind, gesture.speed, ca)[0]) * window_s)
            prev = cfg.render_placement
        cache[key] = (fps, energy)
    return cache[key]


def _truth(device, page, gesture, windows, frontier, cache):
    # ground truth does not depend on the user, so sessions of different users share it
    key = ("t", id(device), id(frontier), page.id, gesture, tuple(w.shown.start_px for w in windows))
    if key not in cache:
        ca = ConfigArrays.of(frontier.configs)
        cache[key] = [_window_oracle(device, page, gesture, w, ca) for w in windows]
    return cache[key]


def run_session(page: PageDescriptor, gesture: Gesture, user: UserModel, device: DeviceModel,
                predictors: Predictors | None, frontier: ConfigFrontier, mode: str = "camel",
                target_scale: float = 1.0, window_s: float = SCHEDULING_WINDOW_S,
                pipeline_cache: dict | None = None) -> SessionMetrics:
    """Simulate one gesture under ``mode`` and score it against the baseline governor.

    The render process starts unplaced, so the first window is never charged
    a migration.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "camel":
        if predictors is None:
            raise ConfigurationError("camel mode needs trained predictors")
        predictors.qoe.model(gesture.kind)
        predictors.fps.model(gesture.kind)
    cache = {} if pipeline_cache is None else pipeline_cache
    windows = session_windows(page, gesture, user, window_s)
    thresholds = [w.threshold for w in windows]
    base_fps, base_energy = _baseline_trace(device, page, gesture, windows, window_s, cache)
    if mode == "baseline":
        met = sum(f >= t for f, t in zip(base_fps, thresholds))
        return _metrics(page, gesture, user, device, mode, target_scale, base_fps, base_energy, base_energy,
                        thresholds, met)

    configs = frontier.configs
    truth = _truth(device, page, gesture, windows, frontier, cache)
    if mode == "oracle":
        choice = _oracle_schedule(truth, thresholds, [c.render_placement for c in configs])
        fps, energy, prev = [], [], None
        for (tf, power), i in zip(truth, choice):
            fps.append(float(tf[prev][i]))
            energy.append(float(power[i]) * window_s)
            prev = configs[i].render_placement
        met = sum(f >= t for f, t in zip(fps, thresholds))
        return _metrics(page, gesture, user, device, mode, target_scale, fps, energy, base_energy, thresholds, met)

    fps, energy, prev, met = [], [], None, 0
    for w, (tf, power) in zip(windows, truth):
        target = _camel_target(predictors, page, gesture, w, cache) * target_scale
        pred = _camel_fps(predictors, page, gesture, w.shown, prev, configs, cache)
        res = search_predicted(target, frontier, pred)
        i = res.index
        met += res.met
        fps.append(float(tf[prev][i]))
        energy.append(float(power[i]) * window_s)
        prev = configs[i].render_placement
    return _metrics(page, gesture, user, device, mode, target_scale, fps, energy, base_energy, thresholds, met)


def _features(predictor, gesture: str, page, vp, cache):
    pipe = predictor.model(gesture).pipeline
    key = ("f", id(pipe), page.id, vp.start_px)
    if key not in cache:
        cache[key] = pipe.features(page, vp)
    return cache[key]


def _camel_target(p: Predictors, page, gesture: Gesture, w: _Window, cache) -> float:
    key = ("q", id(p.qoe), page.id, gesture.kind, gesture.speed, w.current.start_px, w.shown.start_px)
    if key not in cache:
        q = QoeInput(_features(p.qoe, gesture.kind, page, w.current, cache),
                     _features(p.qoe, gesture.kind, page, w.shown, cache), gesture.speed)
        cache[key] = predict_min_fps(p.qoe, gesture.kind, q)
    return cache[key]


def _camel_fps(p: Predictors, page, gesture: Gesture, vp, prev, configs, cache) -> np.ndarray:
    # an unplaced render process is predicted as if already on the cluster of each candidate
    key = ("p", id(p.fps), page.id, gesture.kind, gesture.speed, vp.start_px, prev)
    if key not in cache:
        feats = _features(p.fps, gesture.kind, page, vp, cache)
        if prev is None:
            out = np.empty(len(configs))
            for cluster in PLACEMENTS:
                mask = np.array([c.render_placement == cluster for c in configs])
                if mask.any():
                    out[mask] = p.fps.predict_configs(gesture.kind, feats, gesture.speed,
                                                      [c for c, m in zip(configs, mask) if m], cluster)
            cache[key] = out
        else:
            cache[key] = p.fps.predict_configs(gesture.kind, feats, gesture.speed, configs, prev)
    return cache[key]


def _oracle_schedule(truth, thresholds, clusters: Sequence[str]) -> list[int]:
    """Frontier index per window minimising (violations, energy) lexicographically.

    Dynamic programme over the render cluster left by the previous window,
    which is what migration penalties depend on. Ties go to the lower index.
    """
    states = (None,) + PLACEMENTS
    nxt_state = np.array([PLACEMENTS.index(c) for c in clusters])
    # best (violations, energy) from the next window onward, indexed by big/little
    tail_v = np.zeros(len(PLACEMENTS), dtype=int)
    tail_e = np.zeros(len(PLACEMENTS))
    policy = []
    for w in range(len(truth) - 1, -1, -1):
        tf, power = truth[w]
        step, new_v, new_e = {}, {}, {}
        for s in states:
            v = (tf[s] < thresholds[w]).astype(int) + tail_v[nxt_state]
            e = power + tail_e[nxt_state]
            i = int(np.lexsort((np.arange(len(e)), e, v))[0])
            step[s], new_v[s], new_e[s] = i, int(v[i]), float(e[i])
        tail_v = np.array([new_v[c] for c in PLACEMENTS])
        tail_e = np.array([new_e[c] for c in PLACEMENTS])
        policy.append(step)
    policy.reverse()
    out, s = [], None
    for step in policy:
        out.append(step[s])
        s = clusters[step[s]]
    return out


# --- cross-validated experiments ---------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    """Everything ``evaluate`` needs besides the pages, devices and users."""

    seed: int = 0
    speeds: Mapping = field(default_factory=lambda: dict(DEFAULT_SPEEDS))
    gestures: tuple = GESTURES
    target_scales: tuple = (1.0, 1.1)
    out_dim: int = 16
    feature_pages: int = 300            # unlabelled pages the feature pipeline is fitted on
    frontier_pages: int = 20
    fps_pages: int = 150                # profiled pages the FPS predictors are trained on
    fps_training: TrainingConfig = TrainingConfig(epochs=10, dtype="float32")
    qoe_training: TrainingConfig = TrainingConfig(epochs=60, batch_size=32, dtype="float32")
    shape: ModelShape = ModelShape()
    jobs: int = 1


SCALE_PROFILES = {
    "desk": EvalConfig(),
    "full": EvalConfig(out_dim=127, feature_pages=1000, frontier_pages=100, fps_pages=800,
                        fps_training=TrainingConfig(epochs=50, dtype="float32"),
                        qoe_training=TrainingConfig(epochs=300, batch_size=32, dtype="float32")),
}


SCALE_ALIASES = {"paper": "full"}


def scale_profile(name: str, **overrides) -> EvalConfig:
    name = SCALE_ALIASES.get(name, name)
    if name not in SCALE_PROFILES:
        raise ConfigurationError(f"unknown scale profile {name!r}; expected one of {sorted(SCALE_PROFILES)}")
    return replace(SCALE_PROFILES[name], **overrides)


def representative_users(seed: int = 0) -> list[UserModel]:
    """The first rater of each expectation group."""
    return [group_users(g, seed)[0] for g in ("low", "mod", "high")]


def fold_indices(n_pages: int, folds: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffled page indices split into ``folds`` near-equal test sets."""
    if folds < 1:
        raise DomainError(f"folds must be >= 1, got {folds}")
    if folds > n_pages:
        raise DomainError(f"cannot split {n_pages} pages into {folds} folds")
    order = np.random.default_rng([seed, 5]).permutation(n_pages)
    return [np.sort(part) for part in np.array_split(order, folds)]


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple                 # SessionMetrics sorted by key
    aggregates: dict            # "mode@scale" and "mode@scale/device" -> summary numbers
    folds: int
    seed: int
    smoke: bool = False         # folds=1: tested on the training pages, not a validation

    def select(self, mode: str, scale: float | None = None, device: str | None = None) -> list[SessionMetrics]:
        return [r for r in self.rows if r.mode == mode and (scale is None or r.target_scale == scale)
                and (device is None or r.device == device)]


def _summary(rows: Sequence[SessionMetrics]) -> dict:
    return {
        "sessions": len(rows),
        "saving": shifted_geomean(r.saving for r in rows),
        "violation": shifted_geomean(r.violation for r in rows),
        "violation_fraction": shifted_geomean(r.violation_fraction for r in rows),
        "delta": int(sum(r.delta for r in rows)),
        "energy_j": float(sum(r.energy_j for r in rows)),
        "baseline_energy_j": float(sum(r.baseline_energy_j for r in rows)),
    }


def aggregate(rows: Sequence[SessionMetrics]) -> dict:
    """Shifted geometric means per (mode, scale), overall and per device."""
    groups: dict[str, list] = {}
    for r in rows:
        tag = f"{r.mode}@{r.target_scale:g}"
        groups.setdefault(tag, []).append(r)
        groups.setdefault(f"{tag}/{r.device}", []).append(r)
    return {k: _summary(v) for k, v in sorted(groups.items())}


@dataclass(frozen=True)
class _FoldTask:
    fold: int
    train: Corpus
    test: Corpus
    devices: tuple
    users: tuple
    config: EvalConfig
    pipeline: FeaturePipeline
    frontiers: tuple
    fps: tuple                  # FpsPredictor per device


def train_device_predictors(devices: Sequence[DeviceModel], frontiers: Sequence[ConfigFrontier],
                            pipeline: FeaturePipeline, config: EvalConfig,
                            pages: Corpus | None = None) -> tuple[FpsPredictor, ...]:
    """FPS predictors per device, trained on automatically profiled pages on the frontier configs."""
    if pages is None:
        pages = feature_corpus(config).subset(range(config.fps_pages))
    out = []
    for dev, frontier in zip(devices, frontiers):
        data = {g: build_fps_dataset(pages, dev, config.speeds[g], frontier, g, pipeline, configs=frontier.configs)
                for g in config.gestures}
        out.append(train_fps_predictor(data, pipeline, dev, replace(config.fps_training, seed=config.seed),
                                       config.shape, config.seed))
    return tuple(out)


def train_user_predictors(train: Corpus, users: Sequence[UserModel], pipeline: FeaturePipeline,
                          config: EvalConfig) -> dict[str, QoePredictor]:
    out = {}
    for user in users:
        data = build_qoe_dataset(train, user, config.speeds, pipeline, config.gestures)
        out[user.user_id] = train_qoe_predictor(data, pipeline, replace(config.qoe_training, seed=config.seed),
                                                config.shape, config.seed)
    return out


def _run_fold(task: _FoldTask) -> list[SessionMetrics]:
    cfg = task.config
    qoe = train_user_predictors(task.train, task.users, task.pipeline, cfg)
    rows = []
    for dev, frontier, fps in zip(task.devices, task.frontiers, task.fps):
        cache: dict = {}
        for page in task.test.pages:
            for g in cfg.gestures:
                for speed in cfg.speeds[g]:
                    gesture = Gesture(g, float(speed))
                    for user in task.users:
                        pred = Predictors(qoe[user.user_id], fps)
                        for mode in ("baseline", "oracle"):
                            rows.append(run_session(page, gesture, user, dev, None, frontier, mode,
                                                    pipeline_cache=cache))
                        for scale in cfg.target_scales:
                            rows.append(run_session(page, gesture, user, dev, pred, frontier, "camel", scale,
                                                    pipeline_cache=cache))
    return rows


def feature_corpus(config: EvalConfig) -> Corpus:
    """Unlabelled pages for the feature pipeline, frontier profiling and FPS training."""
    n = max(config.feature_pages, config.frontier_pages, config.fps_pages)
    return generate_corpus(config.seed + 1, n, prefix="feat")


def prepare(devices: Sequence[DeviceModel], config: EvalConfig) -> tuple[FeaturePipeline, tuple]:
    """Feature pipeline and per-device frontiers, both from the unlabelled page sample."""
    pages = feature_corpus(config).pages
    pipeline = fit_pipeline(pages[:config.feature_pages], out_dim=config.out_dim)
    frontiers = tuple(build_frontier(d, pages[:config.frontier_pages], config.speeds) for d in devices)
    return pipeline, frontiers


def evaluate(corpus: Corpus, devices: Sequence[DeviceModel], users: Sequence[UserModel], folds: int = 5,
             config: EvalConfig | None = None, pipeline: FeaturePipeline | None = None,
             frontiers: Sequence[ConfigFrontier] | None = None,
             fps_predictors: Sequence[FpsPredictor] | None = None) -> ExperimentReport:
    """k-fold cross-validation over the user-labelled pages of ``corpus``.

    QoE predictors are trained on the other folds' pages and every session
    runs on the held-out fold, in baseline and oracle mode and in camel mode
    at every target scale. FPS labels come from automatic profiling, so the
    FPS predictors are trained once per device on the separate profiling
    pages, which never overlap ``corpus``. ``folds=1`` trains and tests on
    the same pages and marks the report as a smoke run.
    """
    config = config or EvalConfig()
    parts = fold_indices(len(corpus), folds, config.seed)
    if not devices or not users:
        raise ConfigurationError("evaluate needs at least one device and one user")
    if pipeline is None or frontiers is None:
        fitted = prepare(devices, config)
        pipeline = pipeline or fitted[0]
        frontiers = frontiers or fitted[1]
    if len(frontiers) != len(devices):
        raise ConfigurationError("one frontier per device is required")
    if fps_predictors is None:
        fps_predictors = train_device_predictors(devices, frontiers, pipeline, config)
    if len(fps_predictors) != len(devices):
        raise ConfigurationError("one FPS predictor per device is required")
    everything = np.arange(len(corpus))
    tasks = []
    for k, test in enumerate(parts):
        train_idx = everything if folds == 1 else np.setdiff1d(everything, test)
        tasks.append(_FoldTask(k, corpus.subset(train_idx), corpus.subset(test), tuple(devices), tuple(users),
                               config, pipeline, tuple(frontiers), tuple(fps_predictors)))
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    rows = sorted((r for part in results for r in part), key=_sort_key)
    return ExperimentReport(tuple(rows), aggregate(rows), folds, config.seed, folds == 1)


def _sort_key(r: SessionMetrics):
    return (r.page_id, r.gesture, r.speed, r.user, r.device, r.mode, r.target_scale)


# --- report files -------------------------------------------------------------

REPORT_FORMAT = "camel-report"
REPORT_COLUMNS = tuple(f.name for f in fields(SessionMetrics))
_FIELD_TYPES = {f.name: f.type for f in fields(SessionMetrics)}


def _cell(value) -> str:
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(name: str, text: str):
    kind = _FIELD_TYPES[name]
    if kind == "tuple":
        return tuple(float(v) for v in text.split())
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    return text


def emit_report(report: ExperimentReport) -> str:
    """CSV text preceded by one ``#`` line of JSON metadata and aggregates."""
    head = {"format": REPORT_FORMAT, "version": 1, "folds": report.folds, "seed": report.seed,
            "smoke": report.smoke, "geomean": "expm1(mean(log1p(v)))", "aggregates": report.aggregates}
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.rows:
        writer.writerow([_cell(getattr(r, c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def parse_report(text: str) -> ExperimentReport:
    first, _, body = text.partition("\n")
    if not first.startswith("# "):
        raise DomainError("report is missing its metadata line")
    head = json.loads(first[2:])
    if head.get("format") != REPORT_FORMAT or head.get("version") != 1:
        raise DomainError(f"not a version-1 {REPORT_FORMAT} file")
    reader = csv.reader(io.StringIO(body))
    columns = tuple(next(reader))
    if columns != REPORT_COLUMNS:
        raise DomainError(f"unexpected report columns {columns}")
    rows = tuple(SessionMetrics(**{c: _parse_cell(c, v) for c, v in zip(columns, line)}) for line in reader if line)
    return ExperimentReport(rows, head["aggregates"], head["folds"], head["seed"], head["smoke"])


def save_report(report: ExperimentReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_report(report), encoding="utf-8")
    return path


def load_report(path: str | Path) -> ExperimentReport:
    return parse_report(Path(path).read_text(encoding="utf-8"))
