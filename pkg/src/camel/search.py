"""Configuration search engine.

``build_frontier`` profiles every processing configuration of a device on a
handful of pages and keeps the performance/energy Pareto frontier.
``search`` walks that frontier cheapest-first and returns the first
configuration whose predicted FPS meets the QoE target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from camel.corpus import GESTURES, PageDescriptor
from camel.device import (
    DEFAULT_ERFS, ConfigArrays, DeviceModel, ProcessingConfiguration, fps_vector, power_vector,
)
from camel.errors import ConfigurationError
from camel.records import iter_records, read_header, write_records

__all__ = [
    "ConfigFrontier", "ProcessingConfiguration", "SearchResult", "build_frontier",
    "pareto_frontier", "search", "load_frontier", "save_frontier",
]


@dataclass(frozen=True)
class ConfigFrontier:
    configs: tuple
    energy_cost: dict          # config -> profiled joules per second of interaction
    mean_fps: dict             # config -> profiled mean FPS
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        energies = [self.energy_cost[c] for c in self.configs]
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ConfigurationError("frontier configs must be in strictly increasing energy order")

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def settings(self) -> list[tuple]:
        """Distinct processor settings, in frontier order."""
        return list(dict.fromkeys(c.setting for c in self.configs))

    def erfs(self) -> list[int]:
        return sorted({c.erf for c in self.configs})

    def energies(self) -> np.ndarray:
        return np.array([self.energy_cost[c] for c in self.configs])


def pareto_frontier(configs: Sequence[ProcessingConfiguration], energy: np.ndarray, fps: np.ndarray,
                    min_gain: float = 0.0) -> list[int]:
    """Indices of non-dominated configs, cheapest first.

    Ties in energy go to the higher FPS, then the lower ERF denominator. With
    ``min_gain > 0`` a config is kept only if it improves on the previously
    kept FPS by that relative margin; the most capable config is always kept.
    """
    energy = np.asarray(energy, dtype=float)
    fps = np.asarray(fps, dtype=float)
    erf = np.array([c.erf for c in configs])
    order = np.lexsort((erf, -fps, energy))
    front: list[int] = []
    best = -np.inf
    for i in order:
        if fps[i] > best:
            front.append(int(i))
            best = fps[i]
    if min_gain > 0 and len(front) > 2:
        kept = [front[0]]
        for i in front[1:-1]:
            if fps[i] >= fps[kept[-1]] * (1.0 + min_gain):
                kept.append(i)
        if fps[front[-1]] > fps[kept[-1]]:
            kept.append(front[-1])
        front = kept
    return front


def build_frontier(dev: DeviceModel, sample_pages: Sequence[PageDescriptor], speeds,
                   erfs: Sequence[int] = DEFAULT_ERFS, gestures: Sequence[str] = GESTURES,
                   min_gain: float = 0.02, seed: int = 0) -> ConfigFrontier:
    """Profile every configuration of ``dev`` and keep the Pareto frontier.

    ``speeds`` is either a flat sequence applied to every gesture or a
    mapping gesture -> speeds. Each page is profiled on up to three of its
    slices. The device's baseline configuration always closes the frontier:
    mean FPS saturates on light pages, and heavy slices still need the
    most capable setting.
    """
    if not sample_pages:
        raise ConfigurationError("frontier profiling needs at least one page")
    per_gesture = speeds if isinstance(speeds, dict) else {g: tuple(speeds) for g in gestures}
    if not any(per_gesture.get(g) for g in gestures):
        raise ConfigurationError("frontier profiling needs at least one speed")

    configs = dev.all_configs(erfs)
    ca = ConfigArrays.of(configs)
    fps_sum = np.zeros(len(configs))
    power_sum = np.zeros(len(configs))
    n = 0
    for page in sample_pages:
        for vp in page.viewport_profiles[:3]:
            for g in gestures:
                for s in per_gesture.get(g, ()):
                    fps_sum += fps_vector(dev, page, vp, g, s, ca)
                    power_sum += power_vector(dev, page, vp, g, s, ca)
                    n += 1
    mean_fps = fps_sum / n
    energy = power_sum / n
    front = pareto_frontier(configs, energy, mean_fps, min_gain)
    top = configs.index(dev.baseline_config()) if dev.baseline_config() in configs else None
    if top is not None and top not in front and energy[top] > energy[front[-1]]:
        front.append(top)
    chosen = tuple(configs[i] for i in front)
    return ConfigFrontier(
        configs=chosen,
        energy_cost={configs[i]: float(energy[i]) for i in front},
        mean_fps={configs[i]: float(mean_fps[i]) for i in front},
        provenance={"device": dev.name, "pages": len(sample_pages), "seed": seed,
                    "min_gain": min_gain},
    )


@dataclass(frozen=True)
class SearchResult:
    config: ProcessingConfiguration
    met: bool
    predicted_fps: float
    index: int


def search(target_fps: float, frontier: ConfigFrontier,
           predict: Callable[[Sequence[ProcessingConfiguration]], np.ndarray]) -> SearchResult:
    """Cheapest frontier config whose predicted FPS reaches ``target_fps``.

    ``predict`` maps the frontier's configs to predicted FPS values (an FPS
    model bound to the current page, viewport and speed). If nothing reaches
    the target the config with the highest prediction is returned, ``met=False``.
    """
    if len(frontier) == 0:
        raise ConfigurationError("cannot search an empty frontier")
    if not target_fps > 0:
        raise ConfigurationError(f"target FPS must be positive, got {target_fps}")
    fps = np.asarray(predict(frontier.configs), dtype=float)
    return search_predicted(target_fps, frontier, fps)


def search_predicted(target_fps: float, frontier: ConfigFrontier, fps: np.ndarray) -> SearchResult:
    """``search`` with the frontier's FPS predictions already computed."""
    hits = np.flatnonzero(fps >= target_fps)
    if hits.size:
        i = int(hits[0])
        return SearchResult(frontier.configs[i], True, float(fps[i]), i)
    i = int(np.argmax(fps))  # first maximum: cheapest among equals
    return SearchResult(frontier.configs[i], False, float(fps[i]), i)


def search_batch(targets: np.ndarray, fps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized search over many windows: ``fps`` is (windows, frontier)."""
    ok = fps >= targets[:, None]
    met = ok.any(axis=1)
    idx = np.where(met, ok.argmax(axis=1), fps.argmax(axis=1))
    return idx, met


# --- frontier files -------------------------------------------------------

FRONTIER_FORMAT = "camel-frontier"


def save_frontier(frontier: ConfigFrontier, path: str | Path) -> Path:
    recs = ({**c.to_record(), "energy_cost": frontier.energy_cost[c], "mean_fps": frontier.mean_fps[c]}
            for c in frontier.configs)
    return write_records(path, FRONTIER_FORMAT, recs, provenance=frontier.provenance)


def load_frontier(path: str | Path) -> ConfigFrontier:
    head = read_header(path, FRONTIER_FORMAT)
    configs, energy, fps = [], {}, {}
    for rec in iter_records(path, FRONTIER_FORMAT):
        c = ProcessingConfiguration.from_record(rec)
        configs.append(c)
        energy[c] = rec["energy_cost"]
        fps[c] = rec["mean_fps"]
    return ConfigFrontier(tuple(configs), energy, fps, head.get("provenance", {}))
