import pytest

from cslidar.config import (
    PRESETS,
    ConfigError,
    RunConfig,
    from_mapping,
    load_config,
    load_preset,
    parse_config_text,
)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert isinstance(cfg, RunConfig)


def test_preset_values():
    close = load_preset("close-target")
    assert (close.masks, close.repeats, close.photons_per_mask) == (512, 10, 2500)
    far = load_preset("distant-target")
    assert far.repeats == 100 and far.photons_per_mask == 50


def test_text_roundtrip():
    cfg = load_preset("distant-target").replace(smoothing_mu=None, response=(0.5, 0.5))
    assert from_mapping(parse_config_text(cfg.to_text())) == cfg


def test_parse_comments_and_auto():
    vals = parse_config_text("# header\nmasks = 64  # few\nwindow = auto\ndifferential = no\n")
    assert vals == {"masks": 64, "window": None, "differential": False}


@pytest.mark.parametrize("text,msg", [
    ("bogus = 1", "line 1: unknown key"),
    ("masks 4", "line 1: expected"),
    ("\nmasks = many", "line 2: bad value"),
    ("differential = maybe", "bad value"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        from_mapping({"masks": 0})
    with pytest.raises(ConfigError):
        from_mapping({"pde": 2.0})
    with pytest.raises(ConfigError):
        from_mapping({"photons_per_mask": None})
    with pytest.raises(ConfigError):
        load_preset("nowhere")


def test_load_config_overrides_base(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("masks = 128\n")
    cfg = load_config(p, load_preset("close-target"))
    assert cfg.masks == 128 and cfg.repeats == 10
