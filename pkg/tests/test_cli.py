import json

import pytest

from cslidar.cli import main
from cslidar.io import read_pgm, read_ply
from cslidar.scene import load_scene


def test_scene_bars(tmp_path, capsys):
    out = tmp_path / "s.pscene"
    assert main(["scene", "--kind", "bars", "--size", "64", "--out", str(out)]) == 0
    s = load_scene(out)
    assert (s.width, s.height) == (64, 64)
    assert "64x64" in capsys.readouterr().out


def test_scene_two_plane(tmp_path):
    out = tmp_path / "s.pscene"
    assert main(["scene", "--kind", "two_plane", "--r1", "50", "--r2", "55", "--out", str(out)]) == 0
    assert load_scene(out).depth_extent() == (50.0, 55.0)


def test_missing_kind_is_usage_error(capsys):
    assert main(["scene"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_param_is_usage_error(tmp_path):
    assert main(["scene", "--kind", "bars", "--size", "1", "--out", str(tmp_path / "x")]) == 2


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    scene = d / "s.pscene"
    main(["scene", "--kind", "bars", "--size", "16", "--out", str(scene)])
    traces = d / "tr"
    rc = main(["simulate", "--scene", str(scene), "--preset", "close-target", "--masks", "64",
               "--seed", "2", "--out", str(traces), "--export-masks"])
    return d, scene, traces, rc


def test_simulate_writes_trace_set(small_run):
    _, _, traces, rc = small_run
    assert rc == 0
    manifest = json.loads((traces / "manifest.json").read_text())
    assert len(manifest["masks"]) == 64
    assert len(list(traces.glob("mask_*.csv"))) == 64
    assert len(list((traces / "masks").glob("*.pbm"))) == 64
    assert manifest["config"]["repeats"] == 10


def test_simulate_deterministic(small_run, tmp_path):
    _, scene, traces, _ = small_run
    again = tmp_path / "tr"
    main(["simulate", "--scene", str(scene), "--preset", "close-target", "--masks", "64",
          "--seed", "2", "--out", str(again)])
    assert (again / "manifest.json").read_bytes() == (traces / "manifest.json").read_bytes()
    assert (again / "mask_00017.csv").read_bytes() == (traces / "mask_00017.csv").read_bytes()


def test_reconstruct_outputs(small_run, capsys):
    d, scene, traces, _ = small_run
    out = d / "rc"
    assert main(["reconstruct", "--traces", str(traces), "--scene", str(scene), "--out", str(out),
                 "--raster"]) == 0
    text = capsys.readouterr().out
    assert "PSNR" in text and "raster baseline" in text
    frames = sorted(out.glob("frame_*.pgm"))
    assert len(frames) >= 2
    assert read_pgm(frames[0]).shape == (16, 16)
    assert len(read_ply(out / "points.ply")) > 0
    assert (out / "diagnostics.csv").read_text().startswith("frame,depth_m,iteration,objective")
    assert sorted(out.glob("raster_frame_*.pgm"))


def test_reconstruct_mask_subset(small_run):
    d, _, traces, _ = small_run
    assert main(["reconstruct", "--traces", str(traces), "--masks", "16", "--out", str(d / "m16")]) == 0
    assert len(read_ply(d / "m16" / "points.ply")) > 0
    assert main(["reconstruct", "--traces", str(traces), "--masks", "999", "--out", str(d / "bad")]) == 1


def test_reconstruct_no_peaks(tmp_path, capsys):
    scene = tmp_path / "sky.pscene"
    scene.write_text("PSCENE 1 4 4\n" + "-1 1\n" * 16)
    traces = tmp_path / "tr"
    assert main(["simulate", "--scene", str(scene), "--masks", "8", "--repeats", "1",
                 "--set", "photons_per_pulse_per_pixel = 1", "--out", str(traces)]) == 0
    out = tmp_path / "rc"
    assert main(["reconstruct", "--traces", str(traces), "--out", str(out)]) == 0
    assert "no target" in capsys.readouterr().err
    assert read_ply(out / "points.ply").shape == (0, 4)


def test_simulate_errors(tmp_path):
    assert main(["simulate", "--scene", str(tmp_path / "nope"), "--out", str(tmp_path / "x")]) == 1
    scene = tmp_path / "s.pscene"
    main(["scene", "--kind", "bars", "--size", "8", "--out", str(scene)])
    assert main(["simulate", "--scene", str(scene), "--set", "nonsense=1"]) == 2


def test_analyze_bounds(capsys):
    assert main(["analyze", "bounds", "--n", "4096", "--k", "64"]) == 0
    out = capsys.readouterr().out
    assert "475.6" in out and "384.00" in out and "768" in out


def test_analyze_budget(capsys):
    assert main(["analyze", "budget", "--background", "30"]) == 0
    assert "per measurement: 900" in capsys.readouterr().out


def test_analyze_incoherence(capsys):
    assert main(["analyze", "incoherence", "--n", "64"]) == 0
    assert "mu(pixel, fast_binary) = 1.000000" in capsys.readouterr().out
    assert main(["analyze", "incoherence", "--n", "12"]) == 2
