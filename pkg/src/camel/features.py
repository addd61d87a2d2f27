"""Raw web features, correlation + PCA reduction, and min-max normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from camel.corpus import (
    ATTR_VOCAB, IMAGE_NAMES, PROPERTY_VOCAB, SELECTOR_VOCAB, TAG_VOCAB, TEXT_NAMES, PageDescriptor,
    ViewportSlice,
)
from camel.errors import DomainError, FitError

SCALAR_FEATURES = (
    "dom_node_count", "tree_depth", "style_rule_count", "page_height_px",
    "gpu_mem_footprint", "image_fraction", "text_density", "viewport_start_px",
)
# each vocabulary block ends with a catch-all slot for unseen names
_BLOCKS = (
    ("tag", TAG_VOCAB, "tag_counts"),
    ("attr", ATTR_VOCAB, "attr_counts"),
    ("property", PROPERTY_VOCAB, "property_counts"),
    ("selector", SELECTOR_VOCAB, "selector_pattern_counts"),
    ("visible-tag", TAG_VOCAB, "tag_counts"),
)


def _layout():
    names = list(SCALAR_FEATURES)
    offsets = {}
    for block, vocab, _ in _BLOCKS:
        offsets[block] = len(names)
        names.extend(f"{block}:{v}" for v in vocab)
        names.append(f"{block}:<other>")
    return tuple(names), offsets


FEATURE_NAMES, _OFFSETS = _layout()
RAW_DIM = len(FEATURE_NAMES)


def feature_index(name: str) -> int:
    return FEATURE_NAMES.index(name)


def extract_raw(page: PageDescriptor, viewport: ViewportSlice) -> np.ndarray:
    """Flatten page counts and viewport statistics into a fixed-length vector."""
    x = np.zeros(RAW_DIM)
    x[:len(SCALAR_FEATURES)] = (
        page.dom_node_count, page.tree_depth, page.style_rule_count, page.page_height_px,
        viewport.gpu_mem_footprint, viewport.image_fraction, viewport.text_density, viewport.start_px,
    )
    for block, vocab, attr in _BLOCKS:
        base = _OFFSETS[block]
        index = {v: i for i, v in enumerate(vocab)}
        other = base + len(vocab)
        scale = _visible_scale(page, viewport) if block == "visible-tag" else None
        for name, count in getattr(page, attr).items():
            x[base + index[name] if name in index else other] += count * (scale(name) if scale else 1)
    return x


def _visible_scale(page: PageDescriptor, viewport: ViewportSlice):
    """Share of a tag's page count expected inside ``viewport``.

    Tags are spread over the page by height, with image and text tags
    leaning toward slices richer in that content.
    """
    heights = np.array([s.end_px - s.start_px for s in page.viewport_profiles], dtype=float)
    mean_img = float(np.dot(heights, [s.image_fraction for s in page.viewport_profiles]) / heights.sum())
    mean_txt = float(np.dot(heights, [s.text_density for s in page.viewport_profiles]) / heights.sum())
    frac = (viewport.end_px - viewport.start_px) / page.page_height_px
    img_tilt = (viewport.image_fraction + 0.05) / (mean_img + 0.05)
    txt_tilt = (viewport.text_density + 0.05) / (mean_txt + 0.05)

    def scale(name: str) -> float:
        if name in IMAGE_NAMES:
            return frac * img_tilt
        if name in TEXT_NAMES:
            return frac * txt_tilt
        return frac
    return scale


def extract_raw_batch(pairs: Sequence[tuple[PageDescriptor, ViewportSlice]]) -> np.ndarray:
    return np.array([extract_raw(p, v) for p, v in pairs]).reshape(len(pairs), RAW_DIM)


@dataclass(frozen=True)
class FeatureReducer:
    kept_indices: np.ndarray
    pca_mean: np.ndarray
    pca_scale: np.ndarray
    pca_basis: np.ndarray          # (out_dim, len(kept_indices)), orthonormal rows
    input_dim: int
    log_counts: bool = True

    @property
    def out_dim(self) -> int:
        return self.pca_basis.shape[0]

    def _prepare(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.shape[-1] != self.input_dim:
            raise DomainError(f"raw feature length {raw.shape[-1]} != reducer input {self.input_dim}")
        x = raw[..., self.kept_indices]
        if self.log_counts:
            x = np.log1p(np.maximum(x, 0.0))
        return (x - self.pca_mean) / self.pca_scale

    def project(self, raw: np.ndarray) -> np.ndarray:
        return self._prepare(raw) @ self.pca_basis.T

    def reconstruction_error(self, raws: np.ndarray) -> float:
        """Mean squared residual of the rank-``out_dim`` reconstruction, in the standardized space."""
        z = self._prepare(raws)
        back = (z @ self.pca_basis.T) @ self.pca_basis
        return float(np.mean(np.sum((z - back) ** 2, axis=-1)))

    def to_dict(self) -> dict:
        return {"kept_indices": self.kept_indices.tolist(), "pca_mean": self.pca_mean.tolist(),
                "pca_scale": self.pca_scale.tolist(), "pca_basis": self.pca_basis.tolist(),
                "input_dim": self.input_dim, "log_counts": self.log_counts}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureReducer":
        return cls(np.array(d["kept_indices"], dtype=int), np.array(d["pca_mean"]),
                   np.array(d["pca_scale"]), np.array(d["pca_basis"]).reshape(-1, len(d["kept_indices"])),
                   int(d["input_dim"]), bool(d["log_counts"]))


def correlation_filter(x: np.ndarray, threshold: float) -> np.ndarray:
    """Keep-first greedy filter: drop a column whose |corr| with a kept column exceeds ``threshold``.

    Constant columns carry no information and are dropped as well.
    """
    std = x.std(axis=0)
    live = np.flatnonzero(std > 0)
    if live.size == 0:
        return live
    corr = np.abs(np.corrcoef(x[:, live], rowvar=False)).reshape(live.size, live.size)
    kept: list[int] = []
    for j in range(live.size):
        if all(corr[j, k] <= threshold for k in kept):
            kept.append(j)
    return live[kept]


def fit_reducer(raws: np.ndarray, out_dim: int = 127, corr_threshold: float = 0.95,
                log_counts: bool = True) -> FeatureReducer:
    raws = np.asarray(raws, dtype=float)
    if out_dim < 1:
        raise FitError(f"out_dim must be >= 1, got {out_dim}")
    if raws.ndim != 2 or raws.shape[0] < out_dim:
        raise FitError(f"need at least out_dim={out_dim} samples, got {raws.shape[0]}")
    x = np.log1p(np.maximum(raws, 0.0)) if log_counts else raws
    kept = correlation_filter(x, corr_threshold)
    if out_dim > kept.size:
        raise FitError(f"out_dim={out_dim} exceeds the {kept.size} dimensions surviving the correlation filter")
    xk = x[:, kept]
    mean = xk.mean(axis=0)
    scale = xk.std(axis=0)
    z = (xk - mean) / scale
    cov = z.T @ z / max(1, z.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:out_dim]
    basis = evecs[:, order].T.copy()
    # deterministic sign: largest-magnitude entry of each component is positive
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(out_dim), pivots])
    basis *= signs[:, None]
    return FeatureReducer(kept, mean, scale, basis, raws.shape[1], log_counts)


@dataclass(frozen=True)
class Normalizer:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.max < self.min):
            raise DomainError("normalizer max must be >= min in every dimension")

    @classmethod
    def fit(cls, projected: np.ndarray) -> "Normalizer":
        projected = np.asarray(projected, dtype=float)
        return cls(projected.min(axis=0), projected.max(axis=0))

    def apply(self, projected: np.ndarray) -> np.ndarray:
        projected = np.asarray(projected, dtype=float)
        if projected.shape[-1] != self.min.shape[0]:
            raise DomainError(f"projected length {projected.shape[-1]} != normalizer dim {self.min.shape[0]}")
        width = self.max - self.min
        safe = np.where(width > 0, width, 1.0)
        out = np.where(width > 0, (projected - self.min) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["min"]), np.array(d["max"]))


def reduce_and_normalize(reducer: FeatureReducer, normalizer: Normalizer, raw: np.ndarray) -> np.ndarray:
    return normalizer.apply(reducer.project(raw))


@dataclass(frozen=True)
class FeaturePipeline:
    """A fitted reducer and normalizer applied as one step."""

    reducer: FeatureReducer
    normalizer: Normalizer

    @property
    def out_dim(self) -> int:
        return self.reducer.out_dim

    @classmethod
    def fit(cls, raws: np.ndarray, out_dim: int = 127, corr_threshold: float = 0.95,
            log_counts: bool = True) -> "FeaturePipeline":
        reducer = fit_reducer(raws, out_dim, corr_threshold, log_counts)
        return cls(reducer, Normalizer.fit(reducer.project(raws)))

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return reduce_and_normalize(self.reducer, self.normalizer, raw)

    def features(self, page: PageDescriptor, viewport: ViewportSlice) -> np.ndarray:
        return self.transform(extract_raw(page, viewport))

    def to_dict(self) -> dict:
        return {"reducer": self.reducer.to_dict(), "normalizer": self.normalizer.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturePipeline":
        return cls(FeatureReducer.from_dict(d["reducer"]), Normalizer.from_dict(d["normalizer"]))


def corpus_viewports(pages: Sequence[PageDescriptor], max_viewports: int = 3):
    """(page, slice) pairs covering the first ``max_viewports`` slices of every page."""
    return [(p, v) for p in pages for v in p.viewport_profiles[:max_viewports]]


def fit_pipeline(pages: Sequence[PageDescriptor], out_dim: int = 127, corr_threshold: float = 0.95,
                 max_viewports: int = 3) -> FeaturePipeline:
    pairs = corpus_viewports(pages, max_viewports)
    return FeaturePipeline.fit(extract_raw_batch(pairs), out_dim, corr_threshold)
