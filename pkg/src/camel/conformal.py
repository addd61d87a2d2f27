"""Inductive conformal prediction around a QoE regressor.

Nonconformity is the residual scaled by a k-nearest-neighbour difficulty
estimate, ``|y - h(x)| / (g(x) + beta)``. Calibration scores give error
bounds, and a bound wider than 20% of the prediction marks it as suspect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from camel.adapt import transfer_train
from camel.corpus import Gesture, PageDescriptor, future_viewport
from camel.device import UserModel
from camel.errors import DomainError, FitError, NoneAcceptableError
from camel.features import FeaturePipeline
from camel.neural import (
    Dataset, Network, TrainingConfig, dataset_from_dict, dataset_to_dict, network_from_dict, network_to_dict,
)
from camel.predictors import QoeInput, qoe_label
from camel.records import iter_records, read_header, write_records

BETA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
SUSPECT_THRESHOLD = 0.20


@dataclass(frozen=True)
class KnnDifficulty:
    """Mean absolute residual of the k nearest proper-training points.

    With ``distance_scale > 0`` the mean distance to those neighbours,
    scaled into residual units, is added so that inputs far from all
    training data read as hard even when their neighbours were fit well.
    """

    points: np.ndarray
    abs_residuals: np.ndarray
    k: int = 10
    distance_scale: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        k = min(self.k, len(self.points))
        d2 = (np.sum(xs * xs, axis=1)[:, None] - 2.0 * xs @ self.points.T
              + np.sum(self.points * self.points, axis=1)[None, :])
        d2 = np.maximum(d2, 0.0)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        g = self.abs_residuals[nn].mean(axis=1)
        if self.distance_scale:
            g = g + self.distance_scale * np.sqrt(np.take_along_axis(d2, nn, axis=1)).mean(axis=1)
        return float(g[0]) if single else g


def fit_difficulty(h: Network, data: Dataset, k: int = 10, distance_aware: bool = False) -> KnnDifficulty:
    resid = np.abs(data.targets - h.forward(data.inputs))
    g = KnnDifficulty(data.inputs.copy(), resid, k)
    if not distance_aware or len(data) < 2:
        return g
    # leave-one-out neighbour distances on the training points set the unit conversion
    loo = KnnDifficulty(data.inputs, np.zeros(len(data)), k + 1, 1.0)(data.inputs) * (k + 1) / k
    scale = float(np.mean(resid) / np.mean(loo)) if np.mean(loo) > 0 else 0.0
    return replace(g, distance_scale=scale)


@dataclass(frozen=True)
class ErrorBound:
    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise DomainError(f"half_width must be >= 0, got {self.half_width}")

    @property
    def relative_bound(self) -> float:
        return self.half_width / self.center if self.center > 0 else math.inf

    @property
    def high(self) -> float:
        return self.center + self.half_width


@dataclass(frozen=True)
class CpModel:
    h: Network
    g: KnnDifficulty
    beta: float
    calibration_scores: np.ndarray
    proper_train: Dataset | None = field(default=None, compare=False)
    calibration: Dataset | None = field(default=None, compare=False)
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        s = np.asarray(self.calibration_scores, dtype=float)
        if np.any(np.diff(s) < 0):
            raise DomainError("calibration scores must be sorted ascending")

    def quantile(self, epsilon: float) -> float:
        return conformal_quantile(self.calibration_scores, epsilon)


def conformal_quantile(sorted_scores: np.ndarray, epsilon: float) -> float:
    """The ceil((1 - eps)(n + 1))-th smallest score; infinite when that exceeds n."""
    if not 0 < epsilon < 1:
        raise DomainError(f"significance must lie in (0, 1), got {epsilon}")
    n = len(sorted_scores)
    rank = math.ceil((1.0 - epsilon) * (n + 1) - 1e-12)
    if rank > n:
        return math.inf
    return float(sorted_scores[max(rank, 1) - 1])


def _scores(h_pred, g_val, y, beta):
    return np.abs(y - h_pred) / (g_val + beta)


def nonconformity(cp: CpModel, x: np.ndarray, y) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    out = _scores(cp.h.forward(x), cp.g(x), np.asarray(y, dtype=float), cp.beta)
    return float(out) if np.ndim(out) == 0 else out


def fit_cp(h: Network, proper_train: Dataset, calibration: Dataset, k: int = 10, epsilon: float = 0.1,
           beta_grid: Sequence[float] = BETA_GRID, distance_aware: bool = False) -> CpModel:
    """Fit g on ``proper_train``, pick beta on a split of ``calibration``, then calibrate.

    beta minimises the median half-width on the second half of the
    calibration set among values whose intervals (calibrated on the first
    half) cover at least 1 - epsilon of it; if none reach that coverage the
    best-covering beta is used.
    """
    if len(calibration) == 0:
        raise FitError("calibration set is empty")
    if len(proper_train) == 0:
        raise FitError("proper training set is empty")
    g = fit_difficulty(h, proper_train, k, distance_aware)
    pred = h.forward(calibration.inputs)
    gv = g(calibration.inputs)
    y = calibration.targets
    n = len(y)
    a, b = np.arange(n) < (n + 1) // 2, np.arange(n) >= (n + 1) // 2
    best = None
    for beta in beta_grid:
        if b.any():
            q = conformal_quantile(np.sort(_scores(pred[a], gv[a], y[a], beta)), epsilon)
            width = q * (gv[b] + beta)
            cover = float(np.mean(np.abs(y[b] - pred[b]) <= width))
            med = float(np.median(width))
        else:
            cover, med = 1.0, 0.0
        key = (cover < 1 - epsilon, -cover if cover < 1 - epsilon else 0.0, med)
        if best is None or key < best[0]:
            best = (key, beta)
    beta = float(best[1])
    scores = np.sort(_scores(pred, gv, y, beta))
    return CpModel(h, g, beta, scores, proper_train, calibration, epsilon)


def predict_interval(cp: CpModel, x: np.ndarray, epsilon: float | None = None) -> ErrorBound:
    eps = cp.epsilon if epsilon is None else epsilon
    q = cp.quantile(eps)
    center = cp.h.forward(x)
    gx = cp.g(x)
    half = 0.0 if q == 0 else q * (gx + cp.beta)
    return ErrorBound(float(center), float(half))


def predict_intervals(cp: CpModel, x: np.ndarray, epsilon: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``predict_interval``: (centers, half widths)."""
    eps = cp.epsilon if epsilon is None else epsilon
    q = cp.quantile(eps)
    centers = cp.h.forward(x)
    half = np.zeros_like(centers) if q == 0 else q * (cp.g(x) + cp.beta)
    return centers, half


def is_suspect(cp: CpModel, x: np.ndarray, epsilon: float | None = None,
               threshold: float = SUSPECT_THRESHOLD) -> bool:
    return predict_interval(cp, x, epsilon).relative_bound > threshold


def is_suspect_bound(bound: ErrorBound, threshold: float = SUSPECT_THRESHOLD) -> bool:
    return bound.relative_bound > threshold


# --- continuous learning ----------------------------------------------------

@dataclass(frozen=True)
class FlaggedInput:
    page: PageDescriptor
    start_px: float
    gesture: str
    speed: float
    x: np.ndarray
    bound: ErrorBound

    @property
    def interim_target(self) -> float:
        """Scheduling target until the model is updated: the high end of the bound."""
        return self.bound.high


def interim_target(bound: ErrorBound) -> float:
    return bound.high


def flag_inputs(cp: CpModel, pipeline: FeaturePipeline, cells, epsilon: float | None = None,
                threshold: float = SUSPECT_THRESHOLD) -> list[FlaggedInput]:
    """Suspect cells among ``cells`` = iterable of (page, start_px, gesture, speed)."""
    out = []
    for page, start, gesture, speed in cells:
        cur = page.slice_at(start)
        fut = future_viewport(page, start, Gesture(gesture, speed))
        x = QoeInput(pipeline.features(page, cur), pipeline.features(page, fut), speed).vector()
        bound = predict_interval(cp, x, epsilon)
        if bound.relative_bound > threshold:
            out.append(FlaggedInput(page, float(start), gesture, float(speed), x, bound))
    return out


@dataclass(frozen=True)
class UpdateResult:
    model: Network
    cp: CpModel
    interim_targets: tuple
    added: Dataset
    skipped: tuple


def continuous_update(cp: CpModel, qoe_model: Network, flagged: Sequence[FlaggedInput], user: UserModel,
                      tl_data: Dataset, cfg: TrainingConfig, k: int | None = None) -> UpdateResult:
    """Label flagged inputs with the user, fine-tune on the enlarged set, refit the CP model.

    The returned ``interim_targets`` are what the scheduler uses for the
    flagged inputs while the update is pending.
    """
    interim = tuple(f.interim_target for f in flagged)
    if not flagged:
        return UpdateResult(qoe_model, cp, interim, Dataset(np.zeros((0, qoe_model.spec.input_dim)), np.zeros(0)), ())
    rows, labels, skipped = [], [], []
    for f in flagged:
        try:
            _, _, label = qoe_label(user, f.page, f.start_px, f.gesture, f.speed)
        except NoneAcceptableError as exc:
            skipped.append((f.page.id, f.gesture, f.speed, str(exc)))
            continue
        rows.append(f.x)
        labels.append(label)
    if not rows:
        return UpdateResult(qoe_model, cp, interim, Dataset(np.zeros((0, qoe_model.spec.input_dim)), np.zeros(0)),
                            tuple(skipped))
    added = Dataset(np.array(rows), np.array(labels))
    enlarged = tl_data.concat(added)
    model = transfer_train(qoe_model, enlarged, cfg)
    proper = added if cp.proper_train is None else cp.proper_train.concat(added)
    calib = cp.calibration
    if calib is None or len(calib) == 0:
        raise FitError("the CP model carries no calibration set to refit on")
    new_cp = fit_cp(model, proper, calib, k or cp.g.k, cp.epsilon, distance_aware=cp.g.distance_scale > 0)
    return UpdateResult(model, new_cp, interim, added, tuple(skipped))


FLAG_FORMAT = "camel-flagged"


def write_flag_log(path: str | Path, flagged: Sequence[FlaggedInput]) -> Path:
    recs = ({"page_id": f.page.id, "gesture": f.gesture, "speed": f.speed, "start_px": f.start_px,
             "center": f.bound.center, "half_width": f.bound.half_width} for f in flagged)
    return write_records(path, FLAG_FORMAT, recs)


CP_FORMAT = "camel-cp"


def save_cp(path: str | Path, cp: CpModel, **header) -> Path:
    """The regressor, both data splits and the chosen beta; g and the scores are rebuilt on load."""
    if cp.proper_train is None or cp.calibration is None:
        raise FitError("only CP models that carry their data splits can be saved")
    rec = {"network": network_to_dict(cp.h), "beta": cp.beta, "epsilon": cp.epsilon, "k": cp.g.k,
           "distance_aware": cp.g.distance_scale > 0, "proper": dataset_to_dict(cp.proper_train),
           "calibration": dataset_to_dict(cp.calibration)}
    return write_records(path, CP_FORMAT, [rec], **header)


def load_cp(path: str | Path) -> tuple[dict, CpModel]:
    head = read_header(path, CP_FORMAT)
    rec = next(iter_records(path, CP_FORMAT))
    cp = fit_cp(network_from_dict(rec["network"]), dataset_from_dict(rec["proper"]),
                dataset_from_dict(rec["calibration"]), rec["k"], rec["epsilon"], (rec["beta"],),
                rec["distance_aware"])
    return head, cp
