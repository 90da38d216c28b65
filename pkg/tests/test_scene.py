import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cslidar.scene import (
    MAX_RANGE,
    DepthScene,
    SceneFormatError,
    discretize,
    generate_scene,
    load_scene,
    save_scene,
)


def test_two_plane_halves():
    s = generate_scene("two_plane", 4, 4, r1=50, r2=55)
    assert s.ranges.shape == (4, 4)
    assert np.all(s.ranges[:, :2] == 50) and np.all(s.ranges[:, 2:] == 55)
    assert np.all(s.albedos == 1)
    assert s.depth_extent() == (50.0, 55.0)


def test_bars_have_three_ranges_and_sky():
    s = generate_scene("bars", 64, 64)
    vals = set(np.unique(s.ranges[s.valid]))
    assert vals == {50.0, 55.0, 60.0}
    assert not s.valid.all()


def test_random_blobs_deterministic_and_seed_sensitive():
    a = generate_scene("random_blobs", 32, 32, seed=3)
    b = generate_scene("random_blobs", 32, 32, seed=3)
    c = generate_scene("random_blobs", 32, 32, seed=4)
    assert a == b
    assert a != c


@pytest.mark.parametrize("kind", ["two_plane", "bars", "random_blobs"])
def test_generated_albedo_in_range(kind):
    s = generate_scene(kind, 16, 16)
    assert np.all((s.albedos >= 0) & (s.albedos <= 1))


@pytest.mark.parametrize("w,h", [(1, 4), (4, 0)])
def test_bad_dimensions(w, h):
    with pytest.raises(ValueError):
        generate_scene("bars", w, h)


def test_unknown_kind():
    with pytest.raises(ValueError):
        generate_scene("teapot", 8, 8)


def test_sentinels_normalized():
    s = DepthScene(2, 1, np.array([-5.0, 0.0]), np.array([1.0, 1.0]))
    assert np.all(s.ranges == -1)
    assert s.depth_extent() is None


def test_rejects_out_of_range_values():
    with pytest.raises(ValueError):
        DepthScene(1, 1, np.array([MAX_RANGE + 1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        DepthScene(1, 1, np.array([10.0]), np.array([1.5]))


def test_discretize_bins():
    s = generate_scene("two_plane", 4, 2, r1=50.0, r2=55.0)
    stack = discretize(s, 1.0)
    assert list(stack.depth_bins) == [50.5, 55.5]
    assert stack.frames.shape == (2, 2, 4)
    assert stack.nonempty() == 2
    # each valid pixel lands in exactly one frame
    assert np.array_equal((stack.frames > 0).sum(axis=0), s.valid.astype(int))


def test_roundtrip_example(tmp_path):
    s = generate_scene("bars", 16, 8)
    p = tmp_path / "s.pscene"
    save_scene(s, p)
    assert p.read_text().splitlines()[0] == "PSCENE 1 16 8"
    assert load_scene(p) == s


@settings(max_examples=30, deadline=None)
@given(
    w=st.integers(1, 6),
    h=st.integers(1, 6),
    data=st.data(),
)
def test_roundtrip_property(tmp_path_factory, w, h, data):
    n = w * h
    rng_vals = data.draw(st.lists(
        st.one_of(st.just(-1.0), st.floats(1e-3, MAX_RANGE, allow_nan=False)), min_size=n, max_size=n))
    alb = data.draw(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n, max_size=n))
    s = DepthScene(w, h, np.array(rng_vals), np.array(alb))
    p = tmp_path_factory.mktemp("rt") / "s.pscene"
    save_scene(s, p)
    assert load_scene(p) == s


@pytest.mark.parametrize(
    "text,line",
    [
        ("", 1),
        ("PSCENE 2 1 1\n1 1\n", 1),
        ("PSCENE 1 2 1\n50 1\n", 3),
        ("PSCENE 1 1 1\n50 x\n", 2),
        ("PSCENE 1 2 1\n50 0.5\n50 2.0\n", 3),
    ],
)
def test_load_errors_name_line(tmp_path, text, line):
    p = tmp_path / "bad.pscene"
    p.write_text(text)
    with pytest.raises(SceneFormatError, match=f"line {line}"):
        load_scene(p)


def test_albedo_error_message(tmp_path):
    p = tmp_path / "bad.pscene"
    p.write_text("PSCENE 1 1 1\n50 1.2\n")
    with pytest.raises(SceneFormatError, match=r"outside \[0, 1\]"):
        load_scene(p)
