"""End-to-end synthetic benchmark: scene -> events -> encoding -> toy model -> MIoU.

Labels for a window are rendered at the window's midpoint, so a pixel's class
depends on whether an edge crossed it before or after that instant; only the
timestamp channels carry that information.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .dataset import NUM_CLASSES, LabelMap, Sample
from .encoding import ReprKind, encode_batch
from .events import EventStream, Window, slice_windows
from .metrics import ConfusionMatrix, accumulate_confusion, accuracy, miou
from .synth import SceneObject, SynthConfig, generate_events, scene_from_dict
from .toyseg import LinearPixelModel, TrainConfig, predict, train

DEFAULT_WINDOW_US = 50_000
E2E_TRAIN = TrainConfig(learning_rate=2.0, steps=600, batch_pixels=10**9, seed=0)


def label_time(window: Window, phase: str = "center") -> int:
    if phase == "center":
        return window.t_start_us + window.duration_us // 2
    if phase == "end":
        return window.t_end_us
    raise ValueError(f"unknown label phase {phase!r}")


def window_samples(
    stream: EventStream,
    labels_at: Callable[[int], LabelMap],
    kind: ReprKind,
    duration_us: int = DEFAULT_WINDOW_US,
    phase: str = "center",
) -> list[Sample]:
    return [
        Sample(encode_batch(ev, w, stream.geometry, kind), labels_at(label_time(w, phase)), f"{i:06d}")
        for i, (w, ev) in enumerate(slice_windows(stream, duration_us))
    ]


def split_interleaved(samples: Sequence[Sample], every: int = 3) -> tuple[list[Sample], list[Sample]]:
    """Every ``every``-th sample goes to the test split."""
    train_set = [s for i, s in enumerate(samples) if i % every != every - 1]
    test_set = [s for i, s in enumerate(samples) if i % every == every - 1]
    return train_set, test_set


def evaluate(model: LinearPixelModel, samples: Sequence[Sample], num_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    cm = ConfusionMatrix(num_classes)
    for s in samples:
        cm = accumulate_confusion(cm, s.labels, predict(model, s.tensor))
    return cm


def majority_baseline(train_set: Sequence[Sample], test_set: Sequence[Sample],
                      num_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    counts = np.zeros(256, np.int64)
    for s in train_set:
        counts += np.bincount(s.labels.data.reshape(-1), minlength=256)
    counts[train_set[0].labels.ignore_id] = 0
    majority = int(np.argmax(counts))
    cm = ConfusionMatrix(num_classes)
    for s in test_set:
        pred = LabelMap(s.labels.geometry, np.full(s.labels.geometry.shape, majority, np.uint8))
        cm = accumulate_confusion(cm, s.labels, pred)
    return cm


@dataclass
class BenchmarkResult:
    events: int
    windows: int
    miou: dict[str, float]  # keyed by ReprKind cli name, plus "majority"
    accuracy: dict[str, float]


def e2e_scene() -> tuple[list[SceneObject], SynthConfig]:
    text = resources.files("evseg").joinpath("data/e2e_scene.json").read_text(encoding="utf-8")
    return scene_from_dict(json.loads(text))


def run_synthetic_benchmark(
    scene: Sequence[SceneObject] | None = None,
    config: SynthConfig | None = None,
    kinds: Sequence[ReprKind] = (ReprKind.HIST2, ReprKind.HIST_MEAN_STD6),
    duration_us: int = DEFAULT_WINDOW_US,
    train_config: TrainConfig = E2E_TRAIN,
    policy: str = "literal_eq9",
) -> BenchmarkResult:
    if scene is None or config is None:
        scene, config = e2e_scene()
    stream, labels_at = generate_events(scene, config)
    result = BenchmarkResult(len(stream), 0, {}, {})
    for kind in kinds:
        samples = window_samples(stream, labels_at, kind, duration_us)
        train_set, test_set = split_interleaved(samples)
        result.windows = len(samples)
        if "majority" not in result.miou:
            base = majority_baseline(train_set, test_set)
            result.miou["majority"] = miou(base, policy)[1]
            result.accuracy["majority"] = accuracy(base)
        model, _ = train(None, train_set, train_config)
        cm = evaluate(model, test_set)
        result.miou[kind.cli_name] = miou(cm, policy)[1]
        result.accuracy[kind.cli_name] = accuracy(cm)
    return result
