"""Synthetic event streams with exact per-pixel labels.

Scenes are flat lists of rectangles and disks moving at constant velocity over
a uniform background. At every simulation tick each pixel compares its current
log-intensity against a reference level: while the difference reaches the
threshold an event is emitted and the reference moves one threshold step
toward the new value. A change spanning ``k`` thresholds therefore emits
``k`` events.

Scene file (JSON)::

    {
      "geometry": {"width": 64, "height": 48},
      "background_intensity": 1.0,
      "threshold_sigma": 0.3,
      "tick_us": 1000,
      "duration_us": 600000,
      "seed": 0,
      "timestamp_jitter_us": 999,
      "objects": [
        {"shape": "rectangle", "class_id": 5, "intensity": 3.0,
         "position": [12.0, 30.0], "velocity": [60.0, 0.0], "size": [18.0, 10.0]},
        {"shape": "disk", "class_id": 4, "intensity": 0.4,
         "position": [45.0, 14.0], "velocity": [-25.0, 0.0], "size": 5.0}
      ]
    }

``position`` is the object centre in pixels at t=0, ``velocity`` is in
pixels/second, ``size`` is ``[width, height]`` for rectangles and the radius
for disks. Later objects occlude earlier ones. A pixel is covered when its
integer centre lies inside the shape (rectangles are half-open on the far side).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataset import IGNORE_ID, LabelMap
from .events import EventStream, SensorGeometry

US_PER_S = 1_000_000


@dataclass(frozen=True)
class SceneObject:
    shape: str
    class_id: int
    intensity: float
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    size: float | tuple[float, float] = 1.0

    def __post_init__(self):
        if self.shape not in ("rectangle", "disk"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if not self.intensity > 0:
            raise ValueError("object intensity must be positive")
        if not 1 <= self.class_id < IGNORE_ID:
            raise ValueError(f"class_id must be in 1..{IGNORE_ID - 1}, got {self.class_id}")

    def centre(self, t_us: int) -> tuple[float, float]:
        s = t_us / US_PER_S
        return (self.position[0] + self.velocity[0] * s, self.position[1] + self.velocity[1] * s)

    def covers(self, t_us: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        cx, cy = self.centre(t_us)
        if self.shape == "rectangle":
            w, h = self.size
            return (xs >= cx - w / 2) & (xs < cx + w / 2) & (ys >= cy - h / 2) & (ys < cy + h / 2)
        r = float(self.size)
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


@dataclass(frozen=True)
class SynthConfig:
    geometry: SensorGeometry
    background_intensity: float = 1.0
    threshold_sigma: float = 0.3
    tick_us: int = 1000
    duration_us: int = 1_000_000
    seed: int = 0
    timestamp_jitter_us: int = 0

    def __post_init__(self):
        if self.tick_us < 1:
            raise ValueError("tick_us must be >= 1")
        if not self.threshold_sigma > 0:
            raise ValueError("threshold_sigma must be > 0")
        if not self.background_intensity > 0:
            raise ValueError("background_intensity must be > 0")
        if self.duration_us < 0 or self.timestamp_jitter_us < 0:
            raise ValueError("duration_us and timestamp_jitter_us must be non-negative")


def _grid(geometry: SensorGeometry):
    ys, xs = np.mgrid[0:geometry.height, 0:geometry.width]
    return xs.astype(np.float64), ys.astype(np.float64)


def render_intensity(scene: Sequence[SceneObject], config: SynthConfig, t_us: int) -> np.ndarray:
    xs, ys = _grid(config.geometry)
    img = np.full(config.geometry.shape, float(config.background_intensity))
    for obj in scene:
        img[obj.covers(t_us, xs, ys)] = obj.intensity
    return img


def render_labels(scene: Sequence[SceneObject], config: SynthConfig, t_us: int) -> LabelMap:
    xs, ys = _grid(config.geometry)
    lab = np.zeros(config.geometry.shape, np.uint8)
    for obj in scene:
        lab[obj.covers(t_us, xs, ys)] = obj.class_id
    return LabelMap(config.geometry, lab)


def generate_events(
    scene: Sequence[SceneObject], config: SynthConfig
) -> tuple[EventStream, Callable[[int], LabelMap]]:
    """Simulate the scene; returns the stream and a ``t_us -> LabelMap`` function."""
    rng = np.random.default_rng(config.seed)
    sigma = config.threshold_sigma
    jitter_max = min(config.timestamp_jitter_us, config.tick_us - 1)
    ref = np.log(render_intensity(scene, config, 0))

    chunks = []
    n_ticks = config.duration_us // config.tick_us
    for k in range(1, n_ticks + 1):
        t_k = k * config.tick_us
        level = np.log(render_intensity(scene, config, t_k))
        ys, xs, ps = [], [], []
        for sign in (1, -1):
            while True:
                fire = sign * (level - ref) >= sigma
                if not fire.any():
                    break
                fy, fx = np.nonzero(fire)
                ys.append(fy)
                xs.append(fx)
                ps.append(np.full(len(fy), sign, np.int8))
                ref[fire] += sign * sigma
        if not ys:
            continue
        y = np.concatenate(ys)
        x = np.concatenate(xs)
        p = np.concatenate(ps)
        if jitter_max > 0:
            t = t_k - rng.integers(0, jitter_max + 1, size=len(y))
        else:
            t = np.full(len(y), t_k, np.int64)
        order = np.lexsort((p, x, y, t))
        chunks.append((t[order], x[order], y[order], p[order]))

    if chunks:
        t, x, y, p = (np.concatenate(c) for c in zip(*chunks))
        stream = EventStream(config.geometry, t, x, y, p)
    else:
        stream = EventStream.empty(config.geometry)

    def labels_at(t_us: int) -> LabelMap:
        return render_labels(scene, config, t_us)

    return stream, labels_at


# --- scene files -------------------------------------------------------------


def scene_from_dict(doc: dict) -> tuple[list[SceneObject], SynthConfig]:
    try:
        g = doc["geometry"]
        config = SynthConfig(
            geometry=SensorGeometry(int(g["width"]), int(g["height"])),
            background_intensity=float(doc.get("background_intensity", 1.0)),
            threshold_sigma=float(doc.get("threshold_sigma", 0.3)),
            tick_us=int(doc.get("tick_us", 1000)),
            duration_us=int(doc.get("duration_us", 1_000_000)),
            seed=int(doc.get("seed", 0)),
            timestamp_jitter_us=int(doc.get("timestamp_jitter_us", 0)),
        )
        objects = []
        for o in doc.get("objects", []):
            size = o.get("size", 1.0)
            objects.append(SceneObject(
                shape=o["shape"],
                class_id=int(o["class_id"]),
                intensity=float(o["intensity"]),
                position=tuple(float(v) for v in o["position"]),
                velocity=tuple(float(v) for v in o.get("velocity", (0.0, 0.0))),
                size=tuple(float(v) for v in size) if isinstance(size, (list, tuple)) else float(size),
            ))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid scene description: {exc!r}") from None
    return objects, config


def scene_to_dict(scene: Sequence[SceneObject], config: SynthConfig) -> dict:
    return {
        "geometry": {"width": config.geometry.width, "height": config.geometry.height},
        "background_intensity": config.background_intensity,
        "threshold_sigma": config.threshold_sigma,
        "tick_us": config.tick_us,
        "duration_us": config.duration_us,
        "seed": config.seed,
        "timestamp_jitter_us": config.timestamp_jitter_us,
        "objects": [
            {
                "shape": o.shape,
                "class_id": o.class_id,
                "intensity": o.intensity,
                "position": list(o.position),
                "velocity": list(o.velocity),
                "size": list(o.size) if isinstance(o.size, tuple) else o.size,
            }
            for o in scene
        ],
    }


def load_scene(path) -> tuple[list[SceneObject], SynthConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
