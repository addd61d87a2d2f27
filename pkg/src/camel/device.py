"""Parametric ground-truth oracles: achieved FPS, energy, and per-user FPS acceptance.

These stand in for a phone, a power meter and a panel of human raters. With
``noise_sigma == 0`` every oracle is a pure function of its arguments.

Rendering model, per scheduling window:

* a frame costs ``cpu_cycles`` on the render cluster and ``gpu_cycles`` on the GPU;
  both grow with DOM size, viewport GPU footprint, image share and speed;
* responding to one of every ``N`` input events (ERF ``1/N``) yields at most
  ``event_rate / N`` responses per second, each response perceived as
  ``sqrt(N)`` frames of smoothness, so perceived FPS is
  ``min(fps_cap, responses * sqrt(N))``;
* a render-process migration between clusters stretches that window's frame
  time by ``migration_penalty``.

Power follows the cubic DVFS law ``kappa * f**3`` weighted by utilization.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from camel.corpus import GESTURES, Gesture, PageDescriptor, ViewportSlice
from camel.errors import DomainError, NoneAcceptableError

PLACEMENTS = ("big", "little")
DEFAULT_ERFS = (1, 2, 3, 4, 6, 8, 10, 15)
DEFAULT_LADDER = tuple(float(v) for v in range(60, 4, -5))


@dataclass(frozen=True, order=True)
class ProcessingConfiguration:
    """Respond to one of every ``erf`` events; CPU/GPU clocks; render-process cluster."""

    erf: int
    big_freq: float
    little_freq: float
    gpu_freq: float
    render_placement: str = "little"

    def __post_init__(self):
        if self.erf < 1:
            raise DomainError(f"event-response denominator must be >= 1, got {self.erf}")
        if self.render_placement not in PLACEMENTS:
            raise DomainError(f"render placement must be one of {PLACEMENTS}")

    @property
    def setting(self) -> tuple:
        """The processor setting, i.e. the configuration without its ERF."""
        return (self.big_freq, self.little_freq, self.gpu_freq, self.render_placement)

    def __str__(self) -> str:
        core = "A7x" if self.render_placement == "big" else "A5x"
        render = self.big_freq if self.render_placement == "big" else self.little_freq
        other = self.little_freq if self.render_placement == "big" else self.big_freq
        return f"<ERF-{self.erf}, GPU-{self.gpu_freq / 1000:g}, {core}-{render:g}, {other:g}>"

    def to_record(self) -> dict:
        return {"erf": self.erf, "big_freq": self.big_freq, "little_freq": self.little_freq,
                "gpu_freq": self.gpu_freq, "render_placement": self.render_placement}

    @classmethod
    def from_record(cls, rec: dict) -> "ProcessingConfiguration":
        return cls(int(rec["erf"]), float(rec["big_freq"]), float(rec["little_freq"]),
                   float(rec["gpu_freq"]), rec["render_placement"])


@dataclass(frozen=True)
class FrameCost:
    """Maps page/viewport/speed to per-frame CPU and GPU cycle counts."""

    cpu_base: float = 6.0e6
    cpu_per_node: float = 4.0e3
    cpu_per_speed: float = 800.0          # cycles per (px/s)
    gpu_base: float = 1.5e6
    gpu_per_mb: float = 0.25e6
    gpu_per_image_kspeed: float = 0.5e6   # cycles per (image share * kpx/s)
    cpu_gesture: tuple = (("scroll", 1.0), ("fling", 1.1), ("pinch", 0.8))
    gpu_gesture: tuple = (("scroll", 1.0), ("fling", 1.0), ("pinch", 1.4))

    def cycles(self, page: PageDescriptor, viewport: ViewportSlice, gesture: str, speed: float):
        cpu = (self.cpu_base + self.cpu_per_node * page.dom_node_count + self.cpu_per_speed * speed)
        gpu = (self.gpu_base + self.gpu_per_mb * viewport.gpu_mem_footprint / 1e6
               + self.gpu_per_image_kspeed * viewport.image_fraction * speed / 1000.0)
        return cpu * dict(self.cpu_gesture)[gesture], gpu * dict(self.gpu_gesture)[gesture]


@dataclass(frozen=True)
class DeviceModel:
    name: str
    big_levels: tuple            # GHz, ascending
    little_levels: tuple         # GHz, ascending
    gpu_levels: tuple            # MHz, ascending
    big_kappa: float = 0.11      # W / GHz^3
    little_kappa: float = 0.07
    big_static: float = 0.15     # W per active cluster
    little_static: float = 0.05
    gpu_coeff: float = 0.002     # W / MHz
    big_ipc: float = 1.0
    little_ipc: float = 0.55
    migration_penalty: float = 0.10
    frame_cost_coeffs: FrameCost = field(default_factory=FrameCost)
    event_rate: float = 90.0     # input events per second during a gesture
    fps_cap: float = 60.0
    idle_util: float = 0.2
    background_util: float = 0.15
    gpu_idle_util: float = 0.3
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("big_levels", "little_levels", "gpu_levels"):
            levels = getattr(self, name)
            if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
                raise DomainError(f"{self.name}: {name} must be non-empty and strictly increasing")
        coeffs = (self.big_kappa, self.little_kappa, self.big_static, self.little_static, self.gpu_coeff)
        if min(coeffs) <= 0:
            raise DomainError(f"{self.name}: power coefficients must be positive")
        if self.fps_cap <= 0:
            raise DomainError(f"{self.name}: fps_cap must be positive")

    @property
    def max_big(self) -> float:
        return self.big_levels[-1]

    @property
    def max_little(self) -> float:
        return self.little_levels[-1]

    @property
    def max_gpu(self) -> float:
        return self.gpu_levels[-1]

    def all_configs(self, erfs: Sequence[int] = DEFAULT_ERFS) -> list[ProcessingConfiguration]:
        return [ProcessingConfiguration(n, b, l, g, p)
                for b in self.big_levels for l in self.little_levels for g in self.gpu_levels
                for p in PLACEMENTS for n in erfs]

    def baseline_config(self) -> ProcessingConfiguration:
        """The ``interactive`` governor stand-in: everything flat out, ERF 1, render on big."""
        return ProcessingConfiguration(1, self.max_big, self.max_little, self.max_gpu, "big")

    def check_config(self, config: ProcessingConfiguration) -> None:
        if (config.big_freq not in self.big_levels or config.little_freq not in self.little_levels
                or config.gpu_freq not in self.gpu_levels):
            raise DomainError(f"{config} uses a frequency that is not a level of device {self.name}")


@dataclass(frozen=True)
class ConfigArrays:
    """Column view of a configuration list for vectorized oracle evaluation."""

    erf: np.ndarray
    big: np.ndarray
    little: np.ndarray
    gpu: np.ndarray
    on_big: np.ndarray

    @classmethod
    def of(cls, configs: Sequence[ProcessingConfiguration]) -> "ConfigArrays":
        return cls(
            np.array([c.erf for c in configs], dtype=float),
            np.array([c.big_freq for c in configs], dtype=float),
            np.array([c.little_freq for c in configs], dtype=float),
            np.array([c.gpu_freq for c in configs], dtype=float),
            np.array([c.render_placement == "big" for c in configs], dtype=bool),
        )


def _responses(dev: DeviceModel, cpu_cycles, gpu_cycles, ca: ConfigArrays, migrated):
    render_hz = np.where(ca.on_big, ca.big * dev.big_ipc, ca.little * dev.little_ipc) * 1e9
    capacity = np.minimum(render_hz / cpu_cycles, ca.gpu * 1e6 / gpu_cycles)
    capacity = capacity / np.where(migrated, 1.0 + dev.migration_penalty, 1.0)
    root = np.sqrt(ca.erf)
    responses = np.minimum(np.minimum(dev.event_rate / ca.erf, dev.fps_cap / root), capacity)
    # min(cap, responses * root) term by term, so that a capped config reads exactly fps_cap
    fps = np.minimum(np.minimum(dev.fps_cap, dev.event_rate / root), capacity * root)
    return responses, fps, render_hz


def _migrated(ca: ConfigArrays, prev_cluster: str | None):
    if prev_cluster is None:
        return np.zeros_like(ca.on_big)
    return ca.on_big != (prev_cluster == "big")


def fps_vector(dev: DeviceModel, page: PageDescriptor, viewport: ViewportSlice, gesture: str,
               speed: float, configs: ConfigArrays, prev_cluster: str | None = None) -> np.ndarray:
    cpu, gpu = dev.frame_cost_coeffs.cycles(page, viewport, gesture, speed)
    _, fps, _ = _responses(dev, cpu, gpu, configs, _migrated(configs, prev_cluster))
    return fps


def power_vector(dev: DeviceModel, page: PageDescriptor, viewport: ViewportSlice, gesture: str,
                 speed: float, configs: ConfigArrays) -> np.ndarray:
    """Average power (W) while the gesture runs under each configuration."""
    cpu, gpu = dev.frame_cost_coeffs.cycles(page, viewport, gesture, speed)
    responses, _, render_hz = _responses(dev, cpu, gpu, configs, np.zeros_like(configs.on_big))
    util = np.minimum(1.0, responses * cpu / render_hz)
    busy = dev.idle_util + (1.0 - dev.idle_util) * util
    big_p = dev.big_kappa * configs.big ** 3 * np.where(configs.on_big, busy, dev.background_util)
    little_p = dev.little_kappa * configs.little ** 3 * np.where(configs.on_big, dev.background_util, busy)
    gpu_util = np.minimum(1.0, responses * gpu / (configs.gpu * 1e6))
    gpu_p = dev.gpu_coeff * configs.gpu * (dev.gpu_idle_util + (1.0 - dev.gpu_idle_util) * gpu_util)
    return big_p + little_p + dev.big_static + dev.little_static + gpu_p


def _noise_factor(dev: DeviceModel, *key) -> float:
    if dev.noise_sigma == 0:
        return 1.0
    digest = hashlib.blake2b(repr((dev.seed,) + key).encode(), digest_size=8).digest()
    z = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal()
    return math.exp(dev.noise_sigma * z)


def true_fps(dev: DeviceModel, page: PageDescriptor, viewport: ViewportSlice, gesture: Gesture,
             config: ProcessingConfiguration, prev_cluster: str | None = None) -> float:
    """Achieved FPS of ``gesture`` over ``viewport`` under ``config``.

    ``prev_cluster`` is where the render process ran in the previous window;
    ``None`` means no migration is charged.
    """
    dev.check_config(config)
    ca = ConfigArrays.of([config])
    fps = float(fps_vector(dev, page, viewport, gesture.kind, gesture.speed, ca, prev_cluster)[0])
    if dev.noise_sigma:
        fps *= _noise_factor(dev, "fps", page.id, viewport.start_px, gesture.kind, gesture.speed, config)
        fps = min(dev.fps_cap, fps)
    return fps


def true_energy(dev: DeviceModel, page: PageDescriptor, viewport: ViewportSlice, gesture: Gesture,
                config: ProcessingConfiguration, duration: float) -> float:
    """Joules spent rendering ``gesture`` for ``duration`` seconds."""
    dev.check_config(config)
    if duration < 0:
        raise DomainError(f"duration must be non-negative, got {duration}")
    ca = ConfigArrays.of([config])
    power = float(power_vector(dev, page, viewport, gesture.kind, gesture.speed, ca)[0])
    if dev.noise_sigma:
        power *= _noise_factor(dev, "energy", page.id, viewport.start_px, gesture.kind, gesture.speed, config)
    return power * duration


@dataclass(frozen=True)
class ProfileRecord:
    page_id: str
    gesture: str
    speed: float
    config: ProcessingConfiguration
    achieved_fps: float
    energy: float


def profile(dev: DeviceModel, page: PageDescriptor, viewport: ViewportSlice, gesture: Gesture,
            config: ProcessingConfiguration) -> ProfileRecord:
    fps = true_fps(dev, page, viewport, gesture, config)
    energy = true_energy(dev, page, viewport, gesture, config, gesture.duration)
    return ProfileRecord(page.id, gesture.kind, gesture.speed, config, fps, energy)


# --- users ----------------------------------------------------------------

@dataclass(frozen=True)
class UserModel:
    """Synthetic rater. Image-heavy content and fast interactions raise the bar."""

    user_id: str
    base_min_fps: tuple = (("scroll", 20.0), ("fling", 22.0), ("pinch", 18.0))
    content_sensitivity: float = 12.0   # Hz per unit image share
    speed_sensitivity: float = 3.0      # Hz per kpx/s
    personal_offset: float = 0.0
    fps_cap: float = 60.0
    group: str = "low"

    def threshold(self, viewport: ViewportSlice, gesture: str, speed: float) -> float:
        raw = (dict(self.base_min_fps)[gesture] + self.content_sensitivity * viewport.image_fraction
               + self.speed_sensitivity * speed / 1000.0 + self.personal_offset)
        return float(min(max(raw, 5.0), self.fps_cap))


def user_accepts(u: UserModel, page: PageDescriptor, viewport: ViewportSlice, gesture: str,
                 speed: float, fps: float) -> bool:
    return fps >= u.threshold(viewport, gesture, speed)


def elicit_min_fps(u: UserModel, page: PageDescriptor, viewport: ViewportSlice, gesture: str,
                   speed: float, fps_ladder: Sequence[float] = DEFAULT_LADDER) -> float:
    """Replay the update from high to low FPS and stop at the first rejection."""
    if len(fps_ladder) == 0:
        raise DomainError("empty FPS ladder")
    if any(b >= a for a, b in zip(fps_ladder, fps_ladder[1:])):
        raise DomainError("FPS ladder must be strictly descending")
    if fps_ladder[-1] <= 0 or fps_ladder[0] > u.fps_cap:
        raise DomainError(f"FPS ladder must lie within (0, {u.fps_cap}]")
    last = None
    for rung in fps_ladder:
        if not user_accepts(u, page, viewport, gesture, speed, rung):
            break
        last = rung
    if last is None:
        raise NoneAcceptableError(
            f"user {u.user_id} rejected {fps_ladder[0]} FPS on {page.id} ({gesture} @ {speed:g} px/s)")
    return float(last)


# --- presets --------------------------------------------------------------

_GPU_STEPS = (0.43, 0.59, 0.73, 0.85, 1.0)


def _ladder(max_clock: float, fractions: Iterable[float], ndigits: int) -> tuple:
    return tuple(round(max_clock * f, ndigits) for f in fractions)


def _make_presets() -> dict[str, DeviceModel]:
    xiaomi9 = DeviceModel(
        name="xiaomi9",
        big_levels=(0.71, 1.05, 1.28, 1.71, 2.13, 2.42, 2.84),
        little_levels=(0.3, 0.49, 0.672, 0.98, 1.36, 1.78),
        gpu_levels=(250.0, 345.0, 427.0, 499.0, 585.0),
    )
    big_steps = tuple(v / 2.84 for v in xiaomi9.big_levels)
    little_steps = tuple(v / 1.78 for v in xiaomi9.little_levels)
    pixel2 = DeviceModel(
        name="pixel2",
        big_levels=_ladder(2.35, big_steps, 3),
        little_levels=_ladder(1.9, little_steps, 3),
        gpu_levels=_ladder(710.0, _GPU_STEPS, 0),
        big_kappa=0.13, little_kappa=0.08, big_ipc=0.95, little_ipc=0.5,
        frame_cost_coeffs=FrameCost(cpu_base=6.5e6, gpu_per_mb=0.27e6),
    )
    huaweip9 = DeviceModel(
        name="huaweip9",
        big_levels=_ladder(2.5, big_steps, 3),
        little_levels=_ladder(1.8, little_steps, 3),
        gpu_levels=_ladder(900.0, _GPU_STEPS, 0),
        big_kappa=0.15, little_kappa=0.09, big_ipc=0.9, little_ipc=0.5, gpu_coeff=0.0018,
        frame_cost_coeffs=FrameCost(cpu_per_node=4.3e3, gpu_per_mb=0.3e6),
    )
    odroidxu3 = DeviceModel(
        name="odroidxu3",
        big_levels=_ladder(2.0, big_steps, 3),
        little_levels=_ladder(1.4, little_steps, 3),
        gpu_levels=_ladder(600.0, _GPU_STEPS, 0),
        big_kappa=0.2, little_kappa=0.1, big_ipc=0.9, little_ipc=0.45, gpu_coeff=0.0025,
        big_static=0.25, little_static=0.08,
        frame_cost_coeffs=FrameCost(cpu_base=5.5e6, cpu_per_node=3.8e3),
    )
    return {d.name: d for d in (xiaomi9, pixel2, huaweip9, odroidxu3)}


DEVICE_PRESETS = _make_presets()


def get_device(name: str) -> DeviceModel:
    try:
        return DEVICE_PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown device {name!r}; presets: {sorted(DEVICE_PRESETS)}") from None


USER_GROUPS = {"low": (10, (-3.0, 3.0)), "mod": (14, (9.0, 17.0)), "high": (6, (22.0, 27.0))}


def default_user() -> UserModel:
    return UserModel("default")


def user_presets(seed: int = 0) -> list[UserModel]:
    """Thirty raters in low/moderate/high expectation groups (10/14/6)."""
    rng = np.random.default_rng([seed, 30])
    users = []
    for group, (count, (lo, hi)) in USER_GROUPS.items():
        for i in range(count):
            users.append(UserModel(
                user_id=f"{group}-{i:02d}",
                content_sensitivity=float(12.0 * rng.uniform(0.8, 1.2)),
                speed_sensitivity=float(3.0 * rng.uniform(0.8, 1.2)),
                personal_offset=float(rng.uniform(lo, hi)),
                group=group,
            ))
    return users


def group_users(group: str, seed: int = 0) -> list[UserModel]:
    if group not in USER_GROUPS:
        raise DomainError(f"unknown user group {group!r}; expected one of {list(USER_GROUPS)}")
    return [u for u in user_presets(seed) if u.group == group]


def with_noise(dev: DeviceModel, sigma: float, seed: int) -> DeviceModel:
    return replace(dev, noise_sigma=sigma, seed=seed)
