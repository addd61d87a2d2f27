"""QoE and FPS predictors, one network per gesture, plus their training sets.

The QoE predictor maps (current viewport, future viewport, speed) to the
minimum acceptable FPS. The FPS predictor maps (viewport, speed,
configuration, current render cluster) to the FPS the device achieves.
Both are trained on labels drawn from the simulator oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from camel.corpus import (
    GESTURES, SCHEDULING_WINDOW_S, Corpus, Gesture, PageDescriptor, ViewportSlice, future_viewport,
)
from camel.device import (
    DEFAULT_LADDER, PLACEMENTS, ConfigArrays, DeviceModel, ProcessingConfiguration, UserModel, elicit_min_fps,
    fps_vector, true_fps,
)
from camel.errors import ConfigurationError, DomainError, NoneAcceptableError
from camel.features import FeaturePipeline
from camel.neural import (
    Dataset, Network, NetworkSpec, TrainingConfig, init_network, network_from_dict, network_to_dict, train,
)

SPEED_SCALE = 1000.0      # px/s per input unit
N_CONFIG_INPUTS = 8       # 1/N, three relative clocks, placement one-hot, current cluster one-hot

DEFAULT_SPEEDS = {
    "scroll": (300.0, 600.0, 900.0, 1200.0, 1500.0),
    "fling": (1000.0, 1500.0, 2000.0, 2500.0, 3000.0),
    "pinch": (100.0, 200.0, 300.0, 400.0, 500.0),
}


@dataclass(frozen=True)
class QoeInput:
    current_viewport_features: np.ndarray
    future_viewport_features: np.ndarray
    speed: float

    def __post_init__(self):
        if not self.speed > 0:
            raise DomainError(f"speed must be positive, got {self.speed}")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.current_viewport_features, self.future_viewport_features,
                               [self.speed / SPEED_SCALE]])


@dataclass(frozen=True)
class FpsInput:
    viewport_features: np.ndarray
    speed: float
    config: ProcessingConfiguration
    render_cluster: str = "big"

    def __post_init__(self):
        if not self.speed > 0:
            raise DomainError(f"speed must be positive, got {self.speed}")
        if self.render_cluster not in PLACEMENTS:
            raise DomainError(f"render_cluster must be one of {PLACEMENTS}")


def encode_configs(dev: DeviceModel, configs: Sequence[ProcessingConfiguration], render_cluster: str) -> np.ndarray:
    """Config block of the FPS input, one row per config."""
    ca = ConfigArrays.of(configs)
    on_big = ca.on_big.astype(float)
    cur = 1.0 if render_cluster == "big" else 0.0
    return np.column_stack([
        1.0 / ca.erf, ca.big / dev.max_big, ca.little / dev.max_little, ca.gpu / dev.max_gpu,
        on_big, 1.0 - on_big, np.full(len(configs), cur), np.full(len(configs), 1.0 - cur),
    ])


def fps_rows(dev: DeviceModel, features: np.ndarray, speed: float,
             configs: Sequence[ProcessingConfiguration], render_cluster: str) -> np.ndarray:
    head = np.concatenate([features, [speed / SPEED_SCALE]])
    return np.hstack([np.tile(head, (len(configs), 1)), encode_configs(dev, configs, render_cluster)])


@dataclass(frozen=True)
class GestureModel:
    network: Network
    pipeline: FeaturePipeline


def _check_gestures(models: Mapping[str, GestureModel], what: str) -> None:
    missing = [g for g in GESTURES if g not in models]
    if missing:
        raise ConfigurationError(f"{what} has no model for gesture(s) {missing}")


@dataclass(frozen=True)
class QoePredictor:
    models: Mapping[str, GestureModel]

    def model(self, gesture: str) -> GestureModel:
        if gesture not in self.models:
            raise ConfigurationError(f"QoE predictor has no model for gesture {gesture!r}")
        return self.models[gesture]

    def features(self, gesture: str, page: PageDescriptor, current: ViewportSlice,
                 future: ViewportSlice, speed: float) -> QoeInput:
        pipe = self.model(gesture).pipeline
        return QoeInput(pipe.features(page, current), pipe.features(page, future), speed)


@dataclass(frozen=True)
class FpsPredictor:
    models: Mapping[str, GestureModel]
    device: DeviceModel

    def model(self, gesture: str) -> GestureModel:
        if gesture not in self.models:
            raise ConfigurationError(f"FPS predictor has no model for gesture {gesture!r}")
        return self.models[gesture]

    def predict_configs(self, gesture: str, features: np.ndarray, speed: float,
                        configs: Sequence[ProcessingConfiguration], render_cluster: str) -> np.ndarray:
        """Predicted FPS of every config in ``configs`` (one batched forward pass)."""
        net = self.model(gesture).network
        return net.forward(fps_rows(self.device, features, speed, configs, render_cluster))


def predict_min_fps(p: QoePredictor, gesture: str, q: QoeInput) -> float:
    return p.model(gesture).network.forward(q.vector())


def predict_fps(p: FpsPredictor, gesture: str, f: FpsInput) -> float:
    return float(p.predict_configs(gesture, f.viewport_features, f.speed, [f.config], f.render_cluster)[0])


# --- training sets --------------------------------------------------------

def cell_viewport(page: PageDescriptor, index: int, max_viewports: int = 3) -> ViewportSlice:
    """Deterministic viewport for grid cell ``index``: cycles through the page's first slices."""
    n = min(len(page.viewport_profiles), max_viewports)
    return page.viewport_profiles[index % n]


@dataclass(frozen=True)
class FpsGrid:
    """Axes of an FPS training grid; ``size`` needs no oracle calls."""

    n_pages: int
    n_speeds: int
    n_settings: int
    n_erfs: int

    @property
    def size(self) -> int:
        return self.n_pages * self.n_speeds * self.n_settings * self.n_erfs


def fps_grid(corpus: Corpus | int, speeds: Sequence | int, settings: Sequence | int, erfs: Sequence | int) -> FpsGrid:
    n = [x if isinstance(x, int) else len(x) for x in (corpus, speeds, settings, erfs)]
    return FpsGrid(*n)


def build_fps_dataset(corpus: Corpus, device: DeviceModel, speeds: Sequence[float], frontier,
                      gesture: str = "scroll", pipeline: FeaturePipeline | None = None,
                      settings: Sequence[tuple] | None = None, erfs: Sequence[int] | None = None,
                      metadata_only: bool = False, configs: Sequence[ProcessingConfiguration] | None = None):
    """One sample per (page, speed, processor setting, ERF) cell labelled by the device oracle.

    Settings and ERFs default to those appearing on ``frontier``; an explicit
    ``configs`` list replaces their cross product. The cell's
    viewport cycles through the page's first slices and its current render
    cluster alternates, so the migration penalty is represented. With
    ``metadata_only`` the grid shape is returned without touching the oracle.
    """
    if configs is None:
        settings = list(frontier.settings()) if settings is None else list(settings)
        erfs = list(frontier.erfs()) if erfs is None else list(erfs)
        configs = [ProcessingConfiguration(n, *s) for s in settings for n in erfs]
    else:
        configs = list(configs)
        settings, erfs = configs, [1]
    if metadata_only:
        return fps_grid(corpus, speeds, settings, erfs)
    if pipeline is None:
        raise ConfigurationError("building FPS samples needs a fitted feature pipeline")
    rows, labels, meta = [], [], []
    cell = 0
    for page in corpus.pages:
        for si, speed in enumerate(speeds):
            vp = cell_viewport(page, si)
            feats = pipeline.features(page, vp)
            for cluster in PLACEMENTS:
                # alternate the current cluster across consecutive config cells
                mask = (np.arange(len(configs)) + cell) % 2 == PLACEMENTS.index(cluster)
                if not mask.any():
                    continue
                sub = [c for c, m in zip(configs, mask) if m]
                y = fps_vector(device, page, vp, gesture, speed, ConfigArrays.of(sub), cluster)
                rows.append(fps_rows(device, feats, speed, sub, cluster))
                labels.append(y)
                meta.extend((page.id, vp.start_px, gesture, float(speed), c, cluster) for c in sub)
            cell += 1
    if not rows:
        return Dataset(np.zeros((0, pipeline.out_dim + 1 + N_CONFIG_INPUTS)), np.zeros(0))
    return Dataset(np.vstack(rows), np.concatenate(labels), tuple(meta))


def qoe_label(user: UserModel, page: PageDescriptor, current_offset: float, gesture: str, speed: float,
              ladder: Sequence[float] = DEFAULT_LADDER):
    """(current slice, future slice, elicited min FPS) for one interaction cell."""
    current = page.slice_at(current_offset)
    future = future_viewport(page, current_offset, Gesture(gesture, speed), SCHEDULING_WINDOW_S)
    return current, future, elicit_min_fps(user, page, future, gesture, speed, ladder)


def build_qoe_dataset(corpus: Corpus, user: UserModel, speeds, pipeline: FeaturePipeline | None = None,
                      gestures: Sequence[str] = GESTURES, log: list | None = None,
                      ladder: Sequence[float] = DEFAULT_LADDER) -> dict[str, Dataset]:
    """Per-gesture datasets with one sample per (page, gesture, speed).

    ``speeds`` is a flat sequence or a mapping gesture -> speeds. The current
    viewport cycles through the page's first slices. Cells the user rejects
    at every rung are skipped and appended to ``log``.
    """
    if pipeline is None:
        raise ConfigurationError("building QoE samples needs a fitted feature pipeline")
    per_gesture = speeds if isinstance(speeds, Mapping) else {g: tuple(speeds) for g in gestures}
    width = 2 * pipeline.out_dim + 1
    out = {}
    for g in gestures:
        rows, labels, meta = [], [], []
        for page in corpus.pages:
            for si, speed in enumerate(per_gesture.get(g, ())):
                start = cell_viewport(page, si).start_px
                try:
                    cur, fut, label = qoe_label(user, page, start, g, speed, ladder)
                except NoneAcceptableError as exc:
                    if log is not None:
                        log.append(str(exc))
                    continue
                rows.append(QoeInput(pipeline.features(page, cur), pipeline.features(page, fut), speed).vector())
                labels.append(label)
                meta.append((page.id, float(start), g, float(speed)))
        x = np.array(rows).reshape(len(rows), width)
        out[g] = Dataset(x, np.array(labels, dtype=float), tuple(meta))
    return out


# --- training -------------------------------------------------------------

@dataclass(frozen=True)
class ModelShape:
    hidden_layers: int = 7
    hidden_width: int = 260
    activation: str = "relu"


def fit_network(data: Dataset, cfg: TrainingConfig, shape: ModelShape = ModelShape(), seed: int = 0) -> Network:
    spec = NetworkSpec(data.inputs.shape[1], shape.hidden_layers, shape.hidden_width, shape.activation)
    return train(init_network(spec, seed), data, cfg)


def train_qoe_predictor(datasets: Mapping[str, Dataset], pipeline: FeaturePipeline, cfg: TrainingConfig,
                        shape: ModelShape = ModelShape(), seed: int = 0) -> QoePredictor:
    models = {g: GestureModel(fit_network(d, cfg, shape, seed + i), pipeline)
              for i, (g, d) in enumerate(sorted(datasets.items()))}
    _check_gestures(models, "QoE predictor")
    return QoePredictor(models)


def train_fps_predictor(datasets: Mapping[str, Dataset], pipeline: FeaturePipeline, device: DeviceModel,
                        cfg: TrainingConfig, shape: ModelShape = ModelShape(), seed: int = 0) -> FpsPredictor:
    models = {g: GestureModel(fit_network(d, cfg, shape, seed + i), pipeline)
              for i, (g, d) in enumerate(sorted(datasets.items()))}
    _check_gestures(models, "FPS predictor")
    return FpsPredictor(models, device)


def oracle_fps_labels(device: DeviceModel, corpus: Corpus, data: Dataset, idx: Sequence[int]) -> np.ndarray:
    """Recompute labels of dataset rows through ``true_fps`` (rows carry their cell key in ``meta``)."""
    pages = {p.id: p for p in corpus.pages}
    out = []
    for i in idx:
        page_id, start, gesture, speed, config, cluster = data.meta[i]
        page = pages[page_id]
        out.append(true_fps(device, page, page.slice_at(start), Gesture(gesture, speed), config, cluster))
    return np.array(out)


# --- model bundles ----------------------------------------------------------

BUNDLE_FORMAT = "camel-model"


def save_bundle(path: str | Path, kind: str, models: Mapping[str, GestureModel], **header) -> Path:
    """One self-contained file: header line, then one line per gesture with network and pipeline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": BUNDLE_FORMAT, "version": 1, "kind": kind, **header}, sort_keys=True) + "\n")
        for g in sorted(models):
            m = models[g]
            fh.write(json.dumps({"gesture": g, "network": network_to_dict(m.network),
                                 "pipeline": m.pipeline.to_dict()}, sort_keys=True) + "\n")
    return path


def load_bundle(path: str | Path) -> tuple[dict, dict[str, GestureModel]]:
    with Path(path).open(encoding="utf-8") as fh:
        head = json.loads(fh.readline())
        if head.get("format") != BUNDLE_FORMAT or head.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 {BUNDLE_FORMAT} file")
        models = {}
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                models[rec["gesture"]] = GestureModel(network_from_dict(rec["network"]),
                                                      FeaturePipeline.from_dict(rec["pipeline"]))
    return head, models

