"""Label maps, sequence manifests, dashboard cropping, sample pairing and augmentation.

Class ids follow the six driving categories, with construction and sky merged
into ``background``; 255 marks unlabeled pixels.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .encoding import ReprTensor, load_rpt1
from .errors import BadClassId, CropTooLarge, DegenerateCrop, OverlappingIntervals, ParseError
from .events import SensorGeometry
from .pgm import read_pgm

IGNORE_ID = 255
CLASS_NAMES = ("flat", "background", "object", "vegetation", "human", "vehicle")
NUM_CLASSES = len(CLASS_NAMES)
DASHBOARD_ROWS = 60


@dataclass
class LabelMap:
    geometry: SensorGeometry
    data: np.ndarray  # (H, W) uint8
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != self.geometry.shape:
            raise ValueError(f"label shape {self.data.shape} != {self.geometry.shape}")
        if self.data.dtype != np.uint8:
            if self.data.min(initial=0) < 0 or self.data.max(initial=0) > 255:
                raise ValueError("label ids must fit in 8 bits")
            self.data = self.data.astype(np.uint8)

    @classmethod
    def from_array(cls, data, ignore_id: int = IGNORE_ID) -> "LabelMap":
        data = np.asarray(data)
        return cls(SensorGeometry(data.shape[1], data.shape[0]), data, ignore_id)

    def validate(self, num_classes: int = NUM_CLASSES) -> None:
        bad = (self.data != self.ignore_id) & (self.data >= num_classes)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise BadClassId(f"class id {int(self.data[y, x])} at ({x},{y}) >= {num_classes}")

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (self.geometry == other.geometry and self.ignore_id == other.ignore_id
                and np.array_equal(self.data, other.data))


# --- manifests -------------------------------------------------------------------


@dataclass
class SequenceManifest:
    """Frame-index intervals ``[a, b)`` selected from one recording."""

    name: str
    intervals: list[tuple[int, int]]
    role: str = "train"

    @property
    def frames(self) -> int:
        return sum(b - a for a, b in self.intervals)


_INTERVAL = re.compile(r"\[\s*(\d+)\s*,\s*(\d+)\s*\)")


def parse_intervals(text: str, line_no: int | None = None) -> list[tuple[int, int]]:
    out = [(int(a), int(b)) for a, b in _INTERVAL.findall(text)]
    leftover = _INTERVAL.sub("", text)
    if leftover.replace(",", "").strip():
        raise ParseError(f"unexpected text {leftover.strip()!r} in interval list", line_no)
    for a, b in out:
        if b <= a:
            raise ParseError(f"empty interval [{a}, {b})", line_no)
    for (a0, b0), (a1, b1) in zip(out, out[1:]):
        if a1 < b0:
            if a1 < a0:
                raise ParseError(f"intervals not sorted: [{a1}, {b1}) after [{a0}, {b0})", line_no)
            raise OverlappingIntervals(f"[{a1}, {b1}) overlaps [{a0}, {b0})", line_no)
    return out


def load_manifest(text: str) -> list[SequenceManifest]:
    """Parse blank-line separated blocks::

        sequence: 1487339175
        role: train
        intervals: [0, 4150), [5200, 6600)

    Interval lists may continue on following lines starting with ``[``.
    ``#`` starts a comment.
    """
    manifests = []
    block: dict[str, tuple[str, int]] = {}

    def flush():
        if not block:
            return
        for key in ("sequence", "intervals"):
            if key not in block:
                raise ParseError(f"block missing '{key}'", next(iter(block.values()))[1])
        role, role_line = block.get("role", ("train", None))
        if role not in ("train", "test"):
            raise ParseError(f"role must be train or test, got {role!r}", role_line)
        text, line_no = block["intervals"]
        manifests.append(SequenceManifest(block["sequence"][0], parse_intervals(text, line_no), role))
        block.clear()

    last_key = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            last_key = None
            continue
        if line.startswith("[") and last_key == "intervals":
            prev, first_line = block["intervals"]
            block["intervals"] = (prev + ", " + line, first_line)
            continue
        key, sep, value = line.partition(":")
        key = key.strip().lower()
        if not sep or key not in ("sequence", "role", "intervals"):
            raise ParseError(f"expected 'sequence:', 'role:' or 'intervals:', got {line!r}", line_no)
        if key in block:
            raise ParseError(f"duplicate '{key}' in block", line_no)
        block[key] = (value.strip(), line_no)
        last_key = key
    flush()
    return manifests


def total_frames(manifests: Iterable[SequenceManifest], role: str | None = None) -> int:
    return sum(m.frames for m in manifests if role is None or m.role == role)


def shipped_manifest_text() -> str:
    return resources.files("evseg").joinpath("data/ddd17_intervals.txt").read_text(encoding="utf-8")


def load_shipped_manifest() -> list[SequenceManifest]:
    """Selected DDD17 sequence intervals shipped with the package."""
    return load_manifest(shipped_manifest_text())


# --- cropping / samples ------------------------------------------------------------


def crop_bottom(raster, rows: int = DASHBOARD_ROWS):
    """Drop the bottom ``rows`` rows of a ReprTensor, LabelMap or array."""
    if isinstance(raster, (ReprTensor, LabelMap)):
        height = raster.geometry.height
    else:
        height = np.asarray(raster).shape[0]
    if rows < 0:
        raise ValueError("rows must be non-negative")
    if rows >= height:
        raise CropTooLarge(f"cannot remove {rows} rows from height {height}")
    keep = height - rows
    if isinstance(raster, ReprTensor):
        g = SensorGeometry(raster.geometry.width, keep)
        return ReprTensor(g, raster.kind, raster.window, raster.data[:keep].copy())
    if isinstance(raster, LabelMap):
        g = SensorGeometry(raster.geometry.width, keep)
        return LabelMap(g, raster.data[:keep].copy(), raster.ignore_id)
    return np.asarray(raster)[:keep].copy()


@dataclass
class Sample:
    tensor: ReprTensor
    labels: LabelMap
    id: str = ""

    def __post_init__(self):
        if self.tensor.geometry != self.labels.geometry:
            raise ValueError(
                f"sample {self.id!r}: tensor {self.tensor.geometry} and labels {self.labels.geometry} differ"
            )


def load_samples(tensor_dir, label_dir) -> list[Sample]:
    """Pair ``<id>.rpt1`` in ``tensor_dir`` with ``<id>.pgm`` in ``label_dir``."""
    tensor_dir, label_dir = Path(tensor_dir), Path(label_dir)
    samples = []
    for tpath in sorted(tensor_dir.glob("*.rpt1")):
        lpath = label_dir / (tpath.stem + ".pgm")
        if not lpath.exists():
            continue
        samples.append(Sample(load_rpt1(tpath), LabelMap.from_array(read_pgm(lpath)), tpath.stem))
    return samples


# --- augmentation ------------------------------------------------------------------


@dataclass(frozen=True)
class HFlip:
    pass


@dataclass(frozen=True)
class Rotate:
    degrees: float

    def __post_init__(self):
        if not -15.0 <= self.degrees <= 15.0:
            raise ValueError(f"rotation must be within [-15, 15] degrees, got {self.degrees}")


@dataclass(frozen=True)
class Shift:
    dx: int
    dy: int


@dataclass(frozen=True)
class Crop:
    x0: int
    y0: int
    width: int
    height: int


def sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    """Per-sample generator derived from the global seed and the sample id."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8"))])


def random_op(name: str, geometry: SensorGeometry, rng: np.random.Generator):
    w, h = geometry.width, geometry.height
    if name == "hflip":
        return HFlip()
    if name == "rotate":
        return Rotate(float(rng.uniform(-15.0, 15.0)))
    if name == "shift":
        mx, my = w // 4, h // 4
        return Shift(int(rng.integers(-mx, mx + 1)), int(rng.integers(-my, my + 1)))
    if name == "crop":
        cw = int(rng.integers(max(1, w // 2), w + 1))
        ch = int(rng.integers(max(1, h // 2), h + 1))
        return Crop(int(rng.integers(0, w - cw + 1)), int(rng.integers(0, h - ch + 1)), cw, ch)
    raise ValueError(f"unknown augmentation {name!r}")


def source_coords(op, geometry: SensorGeometry):
    """For every output pixel, the nearest source pixel and whether it lies in frame.

    Returns ``(out_geometry, src_x, src_y, valid)``; tensor and label map are
    both resampled through this single mapping.
    """
    w, h = geometry.width, geometry.height
    if isinstance(op, Crop):
        if op.width < 1 or op.height < 1 or op.x0 < 0 or op.y0 < 0 \
                or op.x0 + op.width > w or op.y0 + op.height > h:
            raise DegenerateCrop(f"crop {op} does not fit inside {w}x{h}")
        out = SensorGeometry(op.width, op.height)
    else:
        out = geometry
    ys, xs = np.mgrid[0:out.height, 0:out.width]

    if isinstance(op, HFlip):
        sx, sy = w - 1 - xs, ys
    elif isinstance(op, Shift):
        if abs(op.dx) > w / 4 or abs(op.dy) > h / 4:
            raise ValueError(f"shift {op} exceeds 25% of {w}x{h}")
        sx, sy = xs - op.dx, ys - op.dy
    elif isinstance(op, Crop):
        sx, sy = xs + op.x0, ys + op.y0
    elif isinstance(op, Rotate):
        # inverse rotation about the image centre
        th = math.radians(op.degrees)
        c, s = math.cos(th), math.sin(th)
        cx, cy = (w - 1) / 2, (h - 1) / 2
        dx, dy = xs - cx, ys - cy
        sx = np.rint(c * dx + s * dy + cx).astype(np.int64)
        sy = np.rint(-s * dx + c * dy + cy).astype(np.int64)
    else:
        raise TypeError(f"unsupported augmentation {op!r}")
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    return out, np.clip(sx, 0, w - 1), np.clip(sy, 0, h - 1), valid


def augment(sample: Sample, op, seed: int | None = None) -> Sample:
    """Apply one geometric transform to tensor and labels alike.

    ``op`` is an op instance or one of ``"hflip"``, ``"rotate"``, ``"shift"``,
    ``"crop"``; names draw their parameters from ``sample_rng(seed, sample.id)``.
    Resampling is nearest-neighbour; pixels that fall outside the source frame
    become 0 in the tensor and ``ignore_id`` in the labels.
    """
    if isinstance(op, str):
        op = random_op(op, sample.tensor.geometry, sample_rng(seed or 0, sample.id))
    out_geom, sx, sy, valid = source_coords(op, sample.tensor.geometry)
    data = sample.tensor.data[sy, sx]
    data[~valid] = 0
    lab = sample.labels.data[sy, sx]
    lab[~valid] = sample.labels.ignore_id
    tensor = ReprTensor(out_geom, sample.tensor.kind, sample.tensor.window, data)
    return Sample(tensor, LabelMap(out_geom, lab, sample.labels.ignore_id), sample.id)
