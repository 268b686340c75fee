"""Dense per-window encodings of event streams.

Four encodings, channel order fixed:

=================  ==================================================
``LAST_EVENT1``    polarity of the latest event per pixel (0 = none)
``HIST2``          Hist-, Hist+
``HIST_RECENT4``   Hist-, Hist+, Recent-, Recent+
``HIST_MEAN_STD6`` Hist-, Hist+, M-, M+, S-, S+
=================  ==================================================

Timestamps are normalized to ``(t - t_start) / T`` in ``[0, 1)``. Hist holds
raw counts; Recent is the largest normalized timestamp, M the mean and S the
sample standard deviation (denominator ``count - 1``, 0 when count <= 1).
Pixels without events are 0 in every channel.

Two independent routes compute the same tensor: :func:`encode_batch`
(vectorized two-pass) and :class:`StreamingAccumulator` (per-event Welford
recurrence, mergeable across disjoint subsets).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable

import numpy as np

from .errors import BadChannel, BadTensorFile, EventOutOfBounds, EventOutOfWindow, OutsideWindow
from .events import Event, EventStream, SensorGeometry, Window


class ReprKind(enum.Enum):
    LAST_EVENT1 = (0, 1, "last1")
    HIST2 = (1, 2, "hist2")
    HIST_RECENT4 = (2, 4, "histrecent4")
    HIST_MEAN_STD6 = (3, 6, "histmeanstd6")

    def __init__(self, code: int, channels: int, cli_name: str):
        self.code = code
        self.channels = channels
        self.cli_name = cli_name

    @classmethod
    def from_code(cls, code: int) -> "ReprKind":
        for k in cls:
            if k.code == code:
                return k
        raise ValueError(f"unknown representation code {code}")

    @classmethod
    def from_name(cls, name: str) -> "ReprKind":
        for k in cls:
            if name in (k.cli_name, k.name):
                return k
        raise ValueError(f"unknown representation {name!r}")


CHANNEL_NAMES = {
    ReprKind.LAST_EVENT1: ("last",),
    ReprKind.HIST2: ("hist_neg", "hist_pos"),
    ReprKind.HIST_RECENT4: ("hist_neg", "hist_pos", "recent_neg", "recent_pos"),
    ReprKind.HIST_MEAN_STD6: ("hist_neg", "hist_pos", "mean_neg", "mean_pos", "std_neg", "std_pos"),
}


@dataclass
class ReprTensor:
    geometry: SensorGeometry
    kind: ReprKind
    window: Window
    data: np.ndarray  # (H, W, C)

    def __post_init__(self):
        expected = (self.geometry.height, self.geometry.width, self.kind.channels)
        if self.data.shape != expected:
            raise ValueError(f"data shape {self.data.shape} != {expected}")

    @property
    def channel_names(self) -> tuple[str, ...]:
        return CHANNEL_NAMES[self.kind]

    def channel(self, name: str) -> np.ndarray:
        return self.data[..., self.channel_names.index(name)]


def normalize_timestamp(t_us: int, window: Window) -> float:
    if not window.contains(t_us):
        raise OutsideWindow(f"t={t_us} outside [{window.t_start_us}, {window.t_end_us})")
    # integer subtraction first keeps shift/scale invariance exact
    return (int(t_us) - window.t_start_us) / window.duration_us


def _check_events(events: EventStream, window: Window, geometry: SensorGeometry):
    if len(events) == 0:
        return
    outside = (events.t < window.t_start_us) | (events.t >= window.t_end_us)
    if outside.any():
        i = int(np.flatnonzero(outside)[0])
        raise EventOutOfWindow(f"event {i} at t={int(events.t[i])} outside [{window.t_start_us}, {window.t_end_us})")
    oob = (events.x >= geometry.width) | (events.y >= geometry.height) | (events.x < 0) | (events.y < 0)
    if oob.any():
        i = int(np.flatnonzero(oob)[0])
        raise EventOutOfBounds(f"event {i} at ({int(events.x[i])},{int(events.y[i])}) outside {geometry.width}x{geometry.height}")


def _assemble(kind: ReprKind, h: int, w: int, count, recent, mean, std, last) -> np.ndarray:
    # per-polarity arrays are (2, H*W), index 0 = negative, 1 = positive
    def planes(a):
        return [a[0].reshape(h, w), a[1].reshape(h, w)]

    if kind is ReprKind.LAST_EVENT1:
        chans = [last.reshape(h, w)]
    elif kind is ReprKind.HIST2:
        chans = planes(count)
    elif kind is ReprKind.HIST_RECENT4:
        chans = planes(count) + planes(recent)
    else:
        chans = planes(count) + planes(mean) + planes(std)
    return np.stack(chans, axis=-1).astype(np.float64, copy=False)


def encode_batch(
    events: EventStream,
    window: Window,
    geometry: SensorGeometry | None = None,
    kind: ReprKind = ReprKind.HIST_MEAN_STD6,
    dtype=np.float64,
) -> ReprTensor:
    """Encode the events of one window (vectorized, two-pass statistics)."""
    geometry = geometry or events.geometry
    _check_events(events, window, geometry)
    h, w = geometry.height, geometry.width
    hw = h * w

    pix = events.y * w + events.x
    pol = (events.p > 0).astype(np.int64)
    key = pol * hw + pix
    tn = (events.t - window.t_start_us) / window.duration_us

    count = np.bincount(key, minlength=2 * hw).astype(np.float64)
    sums = np.bincount(key, weights=tn, minlength=2 * hw)
    mean = np.divide(sums, count, out=np.zeros(2 * hw), where=count > 0)
    dev = tn - mean[key]
    ss = np.bincount(key, weights=dev * dev, minlength=2 * hw)
    std = np.sqrt(np.divide(ss, count - 1, out=np.zeros(2 * hw), where=count > 1))
    recent = np.zeros(2 * hw)
    np.maximum.at(recent, key, tn)

    # latest event per pixel: max timestamp, ties to the later position
    last = np.zeros(hw)
    if len(events):
        order = np.lexsort((np.arange(len(events)), events.t))[::-1]
        uniq, first = np.unique(pix[order], return_index=True)
        last[uniq] = events.p[order][first]

    shape2 = (2, hw)
    data = _assemble(
        kind, h, w,
        count.reshape(shape2), recent.reshape(shape2), mean.reshape(shape2), std.reshape(shape2), last,
    )
    return ReprTensor(geometry, kind, window, data.astype(dtype, copy=False))


class StreamingAccumulator:
    """Single-pass per-pixel, per-polarity statistics for one window.

    State lives in flat Python lists indexed by ``polarity * H * W + y * W + x``
    since per-event scalar updates are much cheaper on lists than on arrays.
    """

    def __init__(self, geometry: SensorGeometry, window: Window):
        self.geometry = geometry
        self.window = window
        n = 2 * geometry.width * geometry.height
        self.count = [0] * n
        self.mean = [0.0] * n
        self.m2 = [0.0] * n
        self.max = [0.0] * n
        hw = geometry.width * geometry.height
        self.last_p = [0] * hw
        self.last_t = [-1] * hw

    def add(self, x: int, y: int, polarity: int, t_us: int) -> None:
        g, win = self.geometry, self.window
        if not (win.t_start_us <= t_us < win.t_start_us + win.duration_us):
            raise EventOutOfWindow(f"t={t_us} outside [{win.t_start_us}, {win.t_end_us})")
        if not (0 <= x < g.width and 0 <= y < g.height):
            raise EventOutOfBounds(f"({x},{y}) outside {g.width}x{g.height}")
        tn = (t_us - win.t_start_us) / win.duration_us
        pix = y * g.width + x
        i = pix + (g.width * g.height if polarity > 0 else 0)
        n = self.count[i] + 1
        self.count[i] = n
        delta = tn - self.mean[i]
        self.mean[i] += delta / n
        self.m2[i] += delta * (tn - self.mean[i])
        if tn > self.max[i]:
            self.max[i] = tn
        if t_us >= self.last_t[pix]:
            self.last_t[pix] = t_us
            self.last_p[pix] = polarity

    def add_stream(self, events: EventStream) -> "StreamingAccumulator":
        add = self.add
        for t, x, y, p in zip(events.t.tolist(), events.x.tolist(), events.y.tolist(), events.p.tolist()):
            add(x, y, p, t)
        return self

    def merge(self, other: "StreamingAccumulator") -> "StreamingAccumulator":
        """Combine with an accumulator over a disjoint, later subset of the window."""
        if other.geometry != self.geometry or other.window != self.window:
            raise ValueError("cannot merge accumulators over different geometry/window")
        na, nb = np.array(self.count, float), np.array(other.count, float)
        ma, mb = np.array(self.mean), np.array(other.mean)
        n = na + nb
        safe = np.where(n > 0, n, 1.0)
        delta = mb - ma
        out = StreamingAccumulator(self.geometry, self.window)
        out.count = (na + nb).astype(int).tolist()
        out.mean = np.where(n > 0, ma + delta * nb / safe, 0.0).tolist()
        out.m2 = (np.array(self.m2) + np.array(other.m2) + delta * delta * na * nb / safe).tolist()
        out.max = np.maximum(self.max, other.max).tolist()
        take_b = np.array(other.last_t) >= np.array(self.last_t)
        take_b &= np.array(other.last_t) >= 0
        out.last_t = np.where(take_b, other.last_t, self.last_t).tolist()
        out.last_p = np.where(take_b, other.last_p, self.last_p).tolist()
        return out

    def finalize(self, kind: ReprKind = ReprKind.HIST_MEAN_STD6) -> ReprTensor:
        g = self.geometry
        h, w = g.height, g.width
        count = np.array(self.count, dtype=np.float64)
        m2 = np.array(self.m2)
        var = np.divide(m2, count - 1, out=np.zeros_like(m2), where=count > 1)
        std = np.sqrt(np.maximum(var, 0.0))
        shape2 = (2, h * w)
        data = _assemble(
            kind, h, w,
            count.reshape(shape2),
            np.array(self.max).reshape(shape2),
            np.array(self.mean).reshape(shape2),
            std.reshape(shape2),
            np.array(self.last_p, dtype=np.float64),
        )
        return ReprTensor(g, kind, self.window, data)


def accumulate(acc: StreamingAccumulator, e: Event, window: Window | None = None) -> StreamingAccumulator:
    if window is not None and window != acc.window:
        raise OutsideWindow("accumulator was opened for a different window")
    acc.add(e.x, e.y, e.polarity, e.timestamp_us)
    return acc


def finalize(acc: StreamingAccumulator, kind: ReprKind = ReprKind.HIST_MEAN_STD6) -> ReprTensor:
    return acc.finalize(kind)


def encode_streaming(events: EventStream, window: Window, geometry: SensorGeometry | None = None,
                     kind: ReprKind = ReprKind.HIST_MEAN_STD6) -> ReprTensor:
    acc = StreamingAccumulator(geometry or events.geometry, window)
    return acc.add_stream(events).finalize(kind)


# --- visualization / export ------------------------------------------------------


def visualize_channel(tensor: ReprTensor, channel: int, scaling: str = "minmax") -> np.ndarray:
    """Map one channel to an 8-bit raster (floor of the linear map)."""
    if not 0 <= channel < tensor.kind.channels:
        raise BadChannel(f"channel {channel} not in 0..{tensor.kind.channels - 1}")
    v = tensor.data[..., channel].astype(np.float64)
    if scaling == "minmax":
        lo, hi = float(v.min()), float(v.max())
        if hi <= lo:
            return np.zeros(v.shape, np.uint8)
        scaled = (v - lo) / (hi - lo) * 255.0
    elif scaling == "fixed_unit":
        scaled = np.clip(v, 0.0, 1.0) * 255.0
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    return np.clip(np.floor(scaled), 0, 255).astype(np.uint8)


def minmax_normalize(tensor: ReprTensor) -> ReprTensor:
    """Rescale every channel independently to [0, 1]; constant channels become 0."""
    d = tensor.data.astype(np.float64)
    lo = d.min(axis=(0, 1), keepdims=True)
    span = d.max(axis=(0, 1), keepdims=True) - lo
    out = np.divide(d - lo, span, out=np.zeros_like(d), where=span > 0)
    return ReprTensor(tensor.geometry, tensor.kind, tensor.window, out)


# RPT1: 32-byte header then (H, W, C) little-endian data, channels interleaved.
RPT1_MAGIC = b"RPT1"
RPT1_HEADER = struct.Struct("<4sHHHBBQQ4x")
assert RPT1_HEADER.size == 32
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def encode_rpt1(tensor: ReprTensor, dtype: str = "f64") -> bytes:
    code = {"f32": 4, "f64": 8}[dtype]
    if tensor.window.t_start_us < 0:
        raise BadTensorFile("RPT1 stores an unsigned window start; window starts before t=0")
    g = tensor.geometry
    header = RPT1_HEADER.pack(
        RPT1_MAGIC, g.width, g.height, tensor.kind.channels, tensor.kind.code, code,
        tensor.window.t_start_us, tensor.window.duration_us,
    )
    return header + np.ascontiguousarray(tensor.data, dtype=_DTYPES[code]).tobytes()


def decode_rpt1(data: bytes) -> ReprTensor:
    if len(data) < RPT1_HEADER.size:
        raise BadTensorFile("buffer shorter than the RPT1 header")
    magic, w, h, c, kind_code, dcode, start, dur = RPT1_HEADER.unpack_from(data, 0)
    if magic != RPT1_MAGIC:
        raise BadTensorFile(f"bad magic {magic!r}")
    if dcode not in _DTYPES:
        raise BadTensorFile(f"unknown dtype code {dcode}")
    try:
        kind = ReprKind.from_code(kind_code)
    except ValueError as exc:
        raise BadTensorFile(str(exc)) from None
    if kind.channels != c:
        raise BadTensorFile(f"{kind.name} has {kind.channels} channels, header says {c}")
    dt = _DTYPES[dcode]
    expected = RPT1_HEADER.size + h * w * c * dt.itemsize
    if len(data) != expected:
        raise BadTensorFile(f"expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype=dt, offset=RPT1_HEADER.size).reshape(h, w, c).copy()
    return ReprTensor(SensorGeometry(w, h), kind, Window(start, dur), arr)


def write_rpt1(tensor: ReprTensor, writer: BinaryIO, dtype: str = "f64") -> int:
    payload = encode_rpt1(tensor, dtype)
    writer.write(payload)
    return len(payload)


def read_rpt1(reader: BinaryIO | bytes) -> ReprTensor:
    data = reader if isinstance(reader, (bytes, bytearray)) else reader.read()
    return decode_rpt1(bytes(data))


def save_rpt1(tensor: ReprTensor, path, dtype: str = "f64") -> int:
    with open(path, "wb") as fh:
        return write_rpt1(tensor, fh, dtype)


def load_rpt1(path) -> ReprTensor:
    with open(path, "rb") as fh:
        return read_rpt1(fh)


def encode_windows(stream: EventStream, windows: Iterable[tuple[Window, EventStream]],
                   kind: ReprKind) -> list[ReprTensor]:
    return [encode_batch(ev, win, stream.geometry, kind) for win, ev in windows]
