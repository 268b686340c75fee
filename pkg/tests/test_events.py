import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evseg.errors import (
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
from evseg.events import (
    Event,
    EventStream,
    SensorGeometry,
    Window,
    encode_binary,
    parse_binary,
    parse_csv,
    read_anchors,
    slice_windows,
    write_binary,
    write_csv,
)

from conftest import random_stream

G8 = SensorGeometry(8, 8)


def header(w, h, n):
    return struct.pack("<4sHHQ", b"EVS1", w, h, n)


def record(t, x, y, p, pad=b"\0\0\0"):
    return struct.pack("<QHHb", t, x, y, p) + pad


# --- CSV ---


def test_csv_zero_one_positive():
    s = parse_csv(["1000,3,2,1"], G8, polarity_mode="zero_one")
    assert list(s) == [Event(x=3, y=2, polarity=1, timestamp_us=1000)]


def test_csv_zero_one_negative():
    s = parse_csv(["1000,3,2,0"], G8, polarity_mode="zero_one")
    assert list(s) == [Event(x=3, y=2, polarity=-1, timestamp_us=1000)]


def test_csv_out_of_bounds():
    with pytest.raises(OutOfBounds) as exc:
        parse_csv(["500,9,0,1"], G8)
    assert exc.value.line_no == 1


def test_csv_skips_comments_and_reports_line_numbers():
    lines = ["# t,x,y,p", "", "10,0,0,1", "5,0,0,1"]
    with pytest.raises(NonMonotonicTimestamp) as exc:
        parse_csv(lines, G8)
    assert exc.value.line_no == 4


@pytest.mark.parametrize("line, err", [
    ("1,2,3", MalformedLine),
    ("a,1,1,1", MalformedLine),
    ("-1,1,1,1", MalformedLine),
    ("1,1,1,0", BadPolarity),
    ("1,1,1,2", BadPolarity),
])
def test_csv_rejects(line, err):
    with pytest.raises(err):
        parse_csv([line], G8)


def test_csv_binary_csv_preserves_fields(rng):
    s = random_stream(rng, G8, 50)
    buf = io.StringIO()
    write_csv(s, buf)
    again = parse_csv(io.StringIO(buf.getvalue()), G8)
    back = parse_binary(encode_binary(again))
    out = io.StringIO()
    write_csv(back, out)
    assert out.getvalue() == buf.getvalue()


# --- EVS1 ---


def test_binary_empty_header():
    s = parse_binary(header(8, 8, 0))
    assert len(s) == 0 and s.geometry == G8


def test_write_binary_sizes():
    buf = io.BytesIO()
    assert write_binary(EventStream.empty(G8), buf) == 16
    assert len(buf.getvalue()) == 16
    two = EventStream(G8, [1, 2], [0, 1], [0, 1], [1, -1])
    buf = io.BytesIO()
    write_binary(two, buf)
    assert len(buf.getvalue()) == 48


def test_binary_layout_is_little_endian():
    s = EventStream(G8, [0x0102], [3], [4], [-1])
    assert encode_binary(s) == header(8, 8, 1) + record(0x0102, 3, 4, -1)


def test_binary_bad_polarity():
    data = header(8, 8, 1) + record(0, 0, 0, 2)
    with pytest.raises(BadPolarity):
        parse_binary(data)


def test_binary_bad_magic():
    with pytest.raises(BadMagic):
        parse_binary(b"EVS2" + header(8, 8, 0)[4:])


def test_binary_truncated():
    data = header(8, 8, 1) + record(0, 0, 0, 1)[:10]
    with pytest.raises(TruncatedRecord):
        parse_binary(data)
    with pytest.raises(TruncatedRecord):
        parse_binary(b"EVS1")


def test_binary_count_mismatch():
    with pytest.raises(CountMismatch):
        parse_binary(header(8, 8, 2) + record(0, 0, 0, 1))


def test_binary_nonzero_padding():
    with pytest.raises(MalformedRecord):
        parse_binary(header(8, 8, 1) + record(0, 0, 0, 1, pad=b"\0\1\0"))


def test_binary_out_of_bounds_and_order():
    with pytest.raises(OutOfBounds):
        parse_binary(header(8, 8, 1) + record(0, 8, 0, 1))
    with pytest.raises(NonMonotonicTimestamp):
        parse_binary(header(8, 8, 2) + record(5, 0, 0, 1) + record(4, 0, 0, 1))


def test_binary_geometry_must_match_header():
    with pytest.raises(OutOfBounds):
        parse_binary(header(8, 8, 0), SensorGeometry(4, 4))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(0, 200), st.integers(0, 2**32))
def test_binary_round_trip(w, h, n, seed):
    s = random_stream(np.random.default_rng(seed), SensorGeometry(w, h), n, span=2**40)
    data = encode_binary(s)
    back = parse_binary(data)
    assert back == s
    buf = io.BytesIO()
    write_binary(back, buf)
    assert buf.getvalue() == data


def test_stream_is_read_only(rng):
    s = random_stream(rng, G8, 5)
    with pytest.raises(ValueError):
        s.t[0] = 7


# --- windows ---


def test_tiled_half_open_boundary():
    s = EventStream(G8, [0, 49_999, 50_000], [0, 0, 0], [0, 0, 0], [1, 1, 1])
    wins = slice_windows(s, 50_000)
    assert [w for w, _ in wins] == [Window(0, 50_000), Window(50_000, 50_000)]
    assert [len(ev) for _, ev in wins] == [2, 1]


def test_centered_excludes_anchor():
    s = EventStream(G8, [0, 49_999, 50_000], [0, 0, 0], [0, 0, 0], [1, 1, 1])
    [(w, ev)] = slice_windows(s, 50_000, mode="centered", anchors=[50_000])
    assert w == Window(0, 50_000) and len(ev) == 2


def test_tiling_empty_stream_fails():
    with pytest.raises(EmptyStream):
        slice_windows(EventStream.empty(G8), 10)


def test_read_anchors():
    assert read_anchors("# anchors\n100\n\n200  # second\n") == [100, 200]
    with pytest.raises(MalformedLine):
        read_anchors("x\n")


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 400), st.integers(1, 100_000), st.integers(0, 2**32))
def test_tiled_windows_partition_stream(n, duration, seed):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, G8, n, t0=int(rng.integers(0, 10**9)), span=int(rng.integers(1, 40 * duration + 2)))
    wins = slice_windows(s, duration)
    # membership oracle: each event is in exactly one window, and that window contains it
    hits = np.zeros(n, int)
    for w, _ in wins:
        for i, t in enumerate(s.t.tolist()):
            if w.t_start_us <= t < w.t_start_us + w.duration_us:
                hits[i] += 1
    assert (hits == 1).all()
    assert sum(len(ev) for _, ev in wins) == n
    assert np.array_equal(np.concatenate([ev.t for _, ev in wins]), s.t)
    for w, ev in wins:
        assert all(w.contains(int(t)) for t in ev.t)
