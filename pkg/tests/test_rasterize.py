import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evrpn.errors import ConfigError, ValidationError
from evrpn.events import EventChunk, SensorGeometry, make_events
from evrpn.rasterize import BinaryFrame, StructuringElement, binarize, build_frame, erode, to_pgm
from oracles import naive_erode

G = SensorGeometry(8, 6)


def frame_of(bits):
    bits = np.asarray(bits, dtype=bool)
    return BinaryFrame(SensorGeometry(bits.shape[1], bits.shape[0]), bits)


def test_last_event_wins():
    ev = make_events([(1, 2, 3, 1), (5, 2, 3, 0), (7, 4, 1, 1)])
    f = build_frame(EventChunk(0, 0, 10, ev), G)
    assert f.cells[3, 2] == 0 and f.occupied[3, 2]
    assert f.cells[1, 4] == 254
    assert f.occupied.sum() == 2


def test_last_event_wins_regardless_of_array_order():
    ev = make_events([(5, 2, 3, 0), (1, 2, 3, 1)])
    f = build_frame(EventChunk(0, 0, 10, ev), G)
    assert f.cells[3, 2] == 0


def test_empty_chunk_gives_blank_frame():
    f = build_frame(EventChunk(0, 0, 10), G)
    assert f.cells.shape == (6, 8) and not f.occupied.any()
    assert not binarize(f).bits.any()


def test_out_of_frame_event_rejected():
    with pytest.raises(ValidationError):
        build_frame(EventChunk(0, 0, 10, make_events([(1, 8, 0, 1)])), G)


def test_binarize_is_polarity_blind():
    ev = make_events([(1, 0, 0, 0), (1, 1, 0, 1)])
    bits = binarize(build_frame(EventChunk(0, 0, 10, ev), G)).bits
    assert bits[0, 0] and bits[0, 1]


def test_pgm_header():
    f = build_frame(EventChunk(0, 0, 10, make_events([(1, 0, 0, 1)])), G)
    data = to_pgm(f)
    assert data.startswith(b"P5\n8 6\n255\n")
    assert len(data) == len(b"P5\n8 6\n255\n") + 48
    assert data[len(b"P5\n8 6\n255\n")] == 254


def test_structuring_element_validation():
    with pytest.raises(ConfigError):
        StructuringElement(np.ones((2, 3)))
    with pytest.raises(ConfigError):
        StructuringElement(np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]]))


def test_full_frame_loses_border_ring():
    out = erode(frame_of(np.ones((5, 7))))
    expect = np.zeros((5, 7), dtype=bool)
    expect[1:-1, 1:-1] = True
    assert np.array_equal(out.bits, expect)


def test_isolated_pixel_and_thin_line_vanish():
    bits = np.zeros((9, 9), dtype=bool)
    bits[4, 4] = True
    assert not erode(frame_of(bits)).bits.any()
    bits[:, 2] = True
    bits[2, :] = True
    assert not erode(frame_of(bits)).bits.any()


def test_zero_iterations_is_identity():
    bits = np.random.default_rng(0).random((6, 6)) < 0.5
    assert erode(frame_of(bits), iterations=0) == frame_of(bits)


frames = arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12)))
masks = st.sampled_from(
    [
        np.ones((3, 3), bool),
        np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool),
        np.ones((1, 3), bool),
        np.ones((5, 5), bool),
        np.array([[1]], bool),
    ]
)


@settings(max_examples=200, deadline=None)
@given(frames, masks)
def test_erode_matches_definition(bits, mask):
    got = erode(frame_of(bits), StructuringElement(mask)).bits
    assert got.tolist() == naive_erode(bits.tolist(), mask.tolist())


@settings(max_examples=200, deadline=None)
@given(frames)
def test_anti_extensive(bits):
    assert not (erode(frame_of(bits)).bits & ~bits).any()


@settings(max_examples=200, deadline=None)
@given(frames, st.data())
def test_monotone(bits, data):
    extra = data.draw(arrays(bool, bits.shape))
    bigger = bits | extra
    assert not (erode(frame_of(bits)).bits & ~erode(frame_of(bigger)).bits).any()


@settings(max_examples=100, deadline=None)
@given(frames, st.integers(0, 3))
def test_iterations_compose(bits, k):
    once = frame_of(bits)
    for _ in range(k):
        once = erode(once)
    assert erode(frame_of(bits), iterations=k) == once


def test_distinct_pixels_all_occupied():
    rng = np.random.default_rng(5)
    g = SensorGeometry(64, 48)
    flat = rng.choice(64 * 48, size=1000, replace=False)
    ev = make_events(sorted((int(t), int(f % 64), int(f // 64), int(t % 2)) for t, f in enumerate(flat)))
    frame = build_frame(EventChunk(0, 0, 1000, ev), g)
    assert frame.occupied.sum() == 1000
    assert binarize(frame).bits.sum() == len({(e["x"], e["y"]) for e in ev})


def test_on_and_off_pixels_both_set():
    ev = make_events([(1, 0, 0, 1), (2, 5, 5, 0)])
    assert binarize(build_frame(EventChunk(0, 0, 3, ev), G)).bits.sum() == 2


def test_solid_block_erodes_to_interior():
    bits = np.zeros((9, 9), dtype=bool)
    bits[2:7, 2:7] = True
    out = erode(frame_of(bits)).bits
    expect = np.zeros((9, 9), dtype=bool)
    expect[3:6, 3:6] = True
    assert np.array_equal(out, expect)


def test_full_vga_frame_loses_one_pixel_border():
    out = erode(frame_of(np.ones((480, 640)))).bits
    assert out[1:-1, 1:-1].all()
    assert not out[0].any() and not out[-1].any() and not out[:, 0].any() and not out[:, -1].any()
