"""Event and stream types, CSV/EVS1 parsing and serialization, window slicing.

A stream is held column-wise (``t``, ``x``, ``y``, ``p`` numpy arrays) and is
read-only once constructed, so slices can be handed to several workers.

EVS1 layout (little-endian)::

    header  16 bytes: b"EVS1", u16 width, u16 height, u64 event count
    record  16 bytes: u64 timestamp_us, u16 x, u16 y, i8 polarity, 3 zero bytes
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadMagic,
    BadPolarity,
    CountMismatch,
    EmptyStream,
    MalformedLine,
    MalformedRecord,
    NonMonotonicTimestamp,
    OutOfBounds,
    TruncatedRecord,
)

EVS1_MAGIC = b"EVS1"
EVS1_HEADER = struct.Struct("<4sHHQ")
EVS1_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")]
)
assert EVS1_HEADER.size == 16 and EVS1_RECORD.itemsize == 16


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    polarity: int
    timestamp_us: int


@dataclass(frozen=True)
class Window:
    """Half-open interval ``[t_start_us, t_start_us + duration_us)``."""

    t_start_us: int
    duration_us: int

    def __post_init__(self):
        if self.duration_us <= 0:
            raise ValueError(f"window duration must be > 0, got {self.duration_us}")

    @property
    def t_end_us(self) -> int:
        return self.t_start_us + self.duration_us

    def contains(self, t_us: int) -> bool:
        return self.t_start_us <= t_us < self.t_end_us


def _as_column(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


class EventStream:
    """Time-ordered, in-bounds events on a fixed sensor geometry."""

    __slots__ = ("geometry", "t", "x", "y", "p")

    def __init__(self, geometry: SensorGeometry, t, x, y, p, *, validate: bool = True):
        self.geometry = geometry
        self.t = _as_column(t, np.int64)
        self.x = _as_column(x, np.int64)
        self.y = _as_column(y, np.int64)
        self.p = _as_column(p, np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns have different lengths")
        if validate:
            self._validate()

    def _validate(self):
        def first(mask):
            return int(np.flatnonzero(mask)[0])

        bad = (self.p != 1) & (self.p != -1)
        if bad.any():
            raise BadPolarity("polarity must be -1 or +1", first(bad))
        bad = (self.x < 0) | (self.x >= self.geometry.width) | (self.y < 0) | (self.y >= self.geometry.height)
        if bad.any():
            raise OutOfBounds("event outside sensor geometry", first(bad))
        if (self.t < 0).any():
            raise NonMonotonicTimestamp("negative timestamp", first(self.t < 0))
        if len(self.t) > 1:
            dec = np.diff(self.t) < 0
            if dec.any():
                raise NonMonotonicTimestamp("timestamps decrease", first(dec) + 1)

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        return cls(geometry, [], [], [], [])

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable[Event]) -> "EventStream":
        events = list(events)
        return cls(
            geometry,
            [e.timestamp_us for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.polarity for e in events],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return EventStream(self.geometry, self.t[i], self.x[i], self.y[i], self.p[i], validate=False)
        return Event(int(self.x[i]), int(self.y[i]), int(self.p[i]), int(self.t[i]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self):
        g = self.geometry
        return f"EventStream({g.width}x{g.height}, {len(self)} events)"


# --- CSV ---------------------------------------------------------------------


def parse_csv(reader: BinaryIO | Iterable, geometry: SensorGeometry, polarity_mode: str = "signed") -> EventStream:
    """Parse ``timestamp_us,x,y,p`` lines; ``#`` lines and blank lines are skipped.

    ``polarity_mode`` is ``"signed"`` (values -1/+1) or ``"zero_one"`` (0 -> -1, 1 -> +1).
    Errors carry the 1-based line number.
    """
    if polarity_mode == "signed":
        pol_map = {-1: -1, 1: 1}
    elif polarity_mode == "zero_one":
        pol_map = {0: -1, 1: 1}
    else:
        raise ValueError(f"unknown polarity_mode {polarity_mode!r}")

    ts, xs, ys, ps = [], [], [], []
    last_t = None
    for line_no, raw in enumerate(reader, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedLine(f"expected 4 fields, got {len(parts)}", line_no)
        try:
            t, x, y, p = (int(s.strip()) for s in parts)
        except ValueError:
            raise MalformedLine(f"non-integer field in {line!r}", line_no) from None
        if t < 0 or t >= 2**63:
            raise MalformedLine(f"timestamp {t} outside the signed 64-bit range", line_no)
        if p not in pol_map:
            raise BadPolarity(f"polarity {p} invalid in {polarity_mode} mode", line_no)
        if not (0 <= x < geometry.width and 0 <= y < geometry.height):
            raise OutOfBounds(f"({x},{y}) outside {geometry.width}x{geometry.height}", line_no)
        if last_t is not None and t < last_t:
            raise NonMonotonicTimestamp(f"{t} < previous {last_t}", line_no)
        last_t = t
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(pol_map[p])
    return EventStream(geometry, ts, xs, ys, ps, validate=False)


def write_csv(stream: EventStream, writer, polarity_mode: str = "signed") -> int:
    """Write the stream as CSV text; returns the number of event lines."""
    zero_one = polarity_mode == "zero_one"
    for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()):
        if zero_one:
            p = 1 if p > 0 else 0
        writer.write(f"{t},{x},{y},{p}\n")
    return len(stream)


# --- EVS1 binary ---------------------------------------------------------------


def parse_binary(reader: BinaryIO | bytes, geometry: SensorGeometry | None = None) -> EventStream:
    """Decode an EVS1 buffer.

    When ``geometry`` is given it must match the header; otherwise the
    header geometry is used.
    """
    data = reader if isinstance(reader, (bytes, bytearray, memoryview)) else reader.read()
    data = bytes(data)
    if len(data) < EVS1_HEADER.size:
        raise TruncatedRecord("buffer shorter than the 16-byte header")
    magic, width, height, count = EVS1_HEADER.unpack_from(data, 0)
    if magic != EVS1_MAGIC:
        raise BadMagic(f"expected {EVS1_MAGIC!r}, got {magic!r}")
    header_geom = SensorGeometry(width, height)
    if geometry is not None and geometry != header_geom:
        raise OutOfBounds(f"header geometry {width}x{height} does not match {geometry.width}x{geometry.height}")
    body = len(data) - EVS1_HEADER.size
    if body % EVS1_RECORD.itemsize:
        raise TruncatedRecord(f"{body % EVS1_RECORD.itemsize} trailing bytes", body // EVS1_RECORD.itemsize)
    n = body // EVS1_RECORD.itemsize
    if n != count:
        raise CountMismatch(f"header declares {count} events, buffer holds {n}")

    rec = np.frombuffer(data, dtype=EVS1_RECORD, count=n, offset=EVS1_HEADER.size)
    raw = np.frombuffer(data, dtype=np.uint8, offset=EVS1_HEADER.size).reshape(n, EVS1_RECORD.itemsize)
    pad = raw[:, 13:]
    if pad.any():
        raise MalformedRecord("non-zero padding bytes", int(np.flatnonzero(pad.any(axis=1))[0]))
    if (rec["t"] > np.iinfo(np.int64).max).any():
        raise MalformedRecord("timestamp exceeds signed 64-bit range")
    return EventStream(header_geom, rec["t"], rec["x"], rec["y"], rec["p"])


def encode_binary(stream: EventStream) -> bytes:
    rec = np.zeros(len(stream), dtype=EVS1_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    g = stream.geometry
    return EVS1_HEADER.pack(EVS1_MAGIC, g.width, g.height, len(stream)) + rec.tobytes()


def write_binary(stream: EventStream, writer: BinaryIO) -> int:
    """Write ``stream`` in EVS1 format; returns bytes written."""
    payload = encode_binary(stream)
    writer.write(payload)
    return len(payload)


def read_events(path) -> EventStream:
    with open(path, "rb") as fh:
        return parse_binary(fh)


def save_events(stream: EventStream, path) -> int:
    with open(path, "wb") as fh:
        return write_binary(stream, fh)


def load_csv(path, geometry: SensorGeometry, polarity_mode: str = "signed") -> EventStream:
    with open(path, "rb") as fh:
        return parse_csv(fh, geometry, polarity_mode)


# --- windowing -------------------------------------------------------------------


def _subset(stream: EventStream, window: Window) -> EventStream:
    lo = np.searchsorted(stream.t, window.t_start_us, side="left")
    hi = np.searchsorted(stream.t, window.t_end_us, side="left")
    return stream[int(lo):int(hi)]


def tiled_windows(stream: EventStream, duration_us: int) -> list[Window]:
    if duration_us <= 0:
        raise ValueError("duration_us must be > 0")
    if len(stream) == 0:
        raise EmptyStream("cannot tile an empty stream")
    first, last = int(stream.t[0]), int(stream.t[-1])
    n = (last - first) // duration_us + 1
    return [Window(first + k * duration_us, duration_us) for k in range(n)]


def slice_windows(
    stream: EventStream,
    duration_us: int,
    mode: str = "tiled",
    anchors: Sequence[int] | None = None,
) -> list[tuple[Window, EventStream]]:
    """Cut ``stream`` into windows of ``duration_us``.

    ``mode="tiled"`` covers ``[first_ts, last_ts]`` with contiguous windows
    anchored at the first timestamp; every event lands in exactly one window.
    ``mode="centered"`` returns ``[a - duration_us, a)`` for each anchor ``a``,
    i.e. the events integrated just before each anchor.
    """
    if duration_us <= 0:
        raise ValueError("duration_us must be > 0")
    if mode == "tiled":
        windows = tiled_windows(stream, duration_us)
    elif mode == "centered":
        if anchors is None:
            raise ValueError("centered mode needs anchors")
        windows = [Window(int(a) - duration_us, duration_us) for a in anchors]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [(w, _subset(stream, w)) for w in windows]


def read_anchors(text: str) -> list[int]:
    """One integer timestamp per line; ``#`` comments allowed."""
    out = []
    for line_no, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise MalformedLine(f"bad anchor {line!r}", line_no) from None
    return out
