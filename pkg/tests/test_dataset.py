import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evseg.dataset import (
    DASHBOARD_ROWS,
    IGNORE_ID,
    Crop,
    HFlip,
    LabelMap,
    Rotate,
    Sample,
    Shift,
    augment,
    crop_bottom,
    load_manifest,
    load_samples,
    load_shipped_manifest,
    parse_intervals,
    total_frames,
)
from evseg.encoding import ReprKind, ReprTensor, save_rpt1
from evseg.errors import BadClassId, BadImageFile, CropTooLarge, DegenerateCrop, OverlappingIntervals, ParseError
from evseg.events import SensorGeometry, Window
from evseg.pgm import decode_pgm, encode_pgm, read_pgm, write_pgm

W50 = Window(0, 50_000)


def make_sample(w, h, kind=ReprKind.HIST2, sample_id="s"):
    """Channel 0 holds a unique 1-based pixel id, labels hold id % 6."""
    g = SensorGeometry(w, h)
    ids = np.arange(1, w * h + 1, dtype=float).reshape(h, w)
    data = np.zeros((h, w, kind.channels))
    data[..., 0] = ids
    labels = ((ids.astype(int) - 1) % 6).astype(np.uint8)
    return Sample(ReprTensor(g, kind, W50, data), LabelMap(g, labels), sample_id)


# --- cropping ---


def test_crop_bottom_dashboard():
    lab = LabelMap(SensorGeometry(346, 260), np.zeros((260, 346), np.uint8))
    out = crop_bottom(lab, DASHBOARD_ROWS)
    assert out.geometry == SensorGeometry(346, 200) and out.data.shape == (200, 346)


def test_crop_bottom_keeps_top_rows():
    s = make_sample(3, 5)
    t = crop_bottom(s.tensor, 2)
    np.testing.assert_array_equal(t.data, s.tensor.data[:3])
    assert crop_bottom(s.tensor, 0).data.shape == s.tensor.data.shape
    np.testing.assert_array_equal(crop_bottom(s.labels.data, 0), s.labels.data)


def test_crop_bottom_whole_image_fails():
    with pytest.raises(CropTooLarge):
        crop_bottom(np.zeros((4, 4)), 4)


# --- manifests ---


def test_shipped_manifest_totals():
    m = load_shipped_manifest()
    assert total_frames(m, "train") == 15950
    assert total_frames(m, "test") == 3890
    [test_seq] = [s for s in m if s.role == "test"]
    assert test_seq.name == "1487417411"


def test_single_interval():
    [m] = load_manifest("sequence: a\nintervals: [0, 10)\n")
    assert m.frames == 10 and m.role == "train"


def test_manifest_continuation_and_blocks():
    text = "# demo\nsequence: a\nrole: test\nintervals: [0, 5),\n  [10, 12)\n\nsequence: b\nintervals: [3, 4)\n"
    a, b = load_manifest(text)
    assert a.intervals == [(0, 5), (10, 12)] and a.frames == 7 and a.role == "test"
    assert b.frames == 1


@pytest.mark.parametrize("text", ["[5, 5)", "[7, 3)", "[0, 10", "0, 10", "[a, 3)"])
def test_bad_intervals(text):
    with pytest.raises(ParseError):
        parse_intervals(text)


def test_overlapping_intervals():
    with pytest.raises(OverlappingIntervals):
        parse_intervals("[0, 10), [5, 20)")
    assert parse_intervals("[0, 10), [10, 20)") == [(0, 10), (10, 20)]


def test_manifest_parse_errors_carry_line():
    with pytest.raises(ParseError) as exc:
        load_manifest("sequence: a\nbogus: 1\n")
    assert exc.value.line_no == 2
    with pytest.raises(ParseError):
        load_manifest("sequence: a\n")


# --- label maps and PGM ---


def test_label_map_validate():
    lab = LabelMap.from_array(np.array([[0, 5], [IGNORE_ID, 1]], np.uint8))
    lab.validate(6)
    with pytest.raises(BadClassId):
        LabelMap.from_array(np.array([[6]], np.uint8)).validate(6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 2**32))
def test_pgm_round_trip(w, h, seed):
    img = np.random.default_rng(seed).integers(0, 256, size=(h, w)).astype(np.uint8)
    blob = encode_pgm(img)
    np.testing.assert_array_equal(decode_pgm(blob), img)
    assert encode_pgm(decode_pgm(blob)) == blob


def test_pgm_header_comments(tmp_path):
    blob = b"P5\n# made by hand\n2 1\n255\n\x07\x09"
    assert decode_pgm(blob).tolist() == [[7, 9]]
    write_pgm(tmp_path / "a.pgm", np.array([[1, 2]], np.uint8))
    assert read_pgm(tmp_path / "a.pgm").tolist() == [[1, 2]]


@pytest.mark.parametrize("blob", [b"P2\n1 1\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00", b"P5\n"])
def test_pgm_rejects(blob):
    with pytest.raises(BadImageFile):
        decode_pgm(blob)


def test_load_samples_pairs_by_stem(tmp_path):
    s = make_sample(4, 3)
    (tmp_path / "t").mkdir()
    (tmp_path / "l").mkdir()
    for stem in ("000000", "000001"):
        save_rpt1(s.tensor, tmp_path / "t" / f"{stem}.rpt1")
    write_pgm(tmp_path / "l" / "000001.pgm", s.labels.data)
    [loaded] = load_samples(tmp_path / "t", tmp_path / "l")
    assert loaded.id == "000001" and loaded.labels == s.labels
    np.testing.assert_array_equal(loaded.tensor.data, s.tensor.data)


# --- augmentation ---


def test_hflip_twice_is_identity():
    s = make_sample(5, 3)
    back = augment(augment(s, HFlip()), HFlip())
    np.testing.assert_array_equal(back.tensor.data, s.tensor.data)
    assert back.labels == s.labels


def test_hflip_mirrors_columns():
    s = make_sample(5, 3)
    np.testing.assert_array_equal(augment(s, HFlip()).labels.data, s.labels.data[:, ::-1])


def test_rotate_zero_is_identity():
    s = make_sample(7, 4)
    r = augment(s, Rotate(0.0))
    np.testing.assert_array_equal(r.tensor.data, s.tensor.data)
    assert r.labels == s.labels


def test_rotate_limits():
    with pytest.raises(ValueError):
        Rotate(20.0)


def test_shift_moves_lone_pixel():
    g = SensorGeometry(8, 8)
    data = np.zeros((8, 8, 2))
    data[3, 1, 1] = 4.0
    lab = np.zeros((8, 8), np.uint8)
    lab[3, 1] = 5
    out = augment(Sample(ReprTensor(g, ReprKind.HIST2, W50, data), LabelMap(g, lab)), Shift(2, 0))
    assert out.tensor.data[3, 3, 1] == 4.0 and out.tensor.data.sum() == 4.0
    assert out.labels.data[3, 3] == 5
    # the two columns uncovered on the left have no source
    assert (out.labels.data[:, :2] == IGNORE_ID).all()
    assert not out.tensor.data[:, :2].any()


def test_shift_limit():
    with pytest.raises(ValueError):
        augment(make_sample(8, 8), Shift(3, 0))


def test_crop_window():
    s = make_sample(6, 5)
    out = augment(s, Crop(1, 2, 3, 2))
    assert out.tensor.geometry == SensorGeometry(3, 2)
    np.testing.assert_array_equal(out.labels.data, s.labels.data[2:4, 1:4])
    with pytest.raises(DegenerateCrop):
        augment(s, Crop(4, 0, 3, 2))


def test_named_ops_are_seeded():
    s = make_sample(16, 12, sample_id="000007")
    a = augment(s, "rotate", seed=5)
    b = augment(s, "rotate", seed=5)
    np.testing.assert_array_equal(a.tensor.data, b.tensor.data)
    other = augment(make_sample(16, 12, sample_id="000008"), "rotate", seed=5)
    assert not np.array_equal(a.tensor.data, other.tensor.data)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["hflip", "rotate", "shift", "crop"]), st.integers(2, 30), st.integers(2, 30),
       st.integers(0, 1000))
def test_augment_keeps_tensor_and_labels_on_one_grid(name, w, h, seed):
    s = make_sample(w, h)
    out = augment(s, name, seed=seed)
    assert out.tensor.geometry == out.labels.geometry
    ids = out.tensor.data[..., 0]
    lab = out.labels.data
    src = ids > 0
    # every in-frame pixel carries the label of the same source pixel
    np.testing.assert_array_equal(lab[src], (ids[src].astype(int) - 1) % 6)
    assert (lab[~src] == IGNORE_ID).all()
    out.labels.validate(6)
