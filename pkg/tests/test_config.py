import pytest

from sensenet.config import (ConfigError, PipelineConfig, build_config, known_keys,
                             load_config, parse_config_text, parse_seconds)


@pytest.mark.parametrize("text,value", [("21ns", 21e-9), ("2.1us", 2.1e-6), ("2.1µs", 2.1e-6),
                                        ("7ms", 7e-3), ("0.5", 0.5), (3, 3.0), ("62 ns", 62e-9)])
def test_parse_seconds(text, value):
    assert parse_seconds(text) == value


@pytest.mark.parametrize("text", ["fast", "3 parsecs", "1..2us"])
def test_parse_seconds_rejects(text):
    with pytest.raises(ConfigError):
        parse_seconds(text)


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.circuit.human_capacitance == 100e-12
    assert (cfg.opt.r_min, cfg.opt.r_max) == (50e3, 300e3)
    assert cfg.layout.ideal_edge_length == 17.0
    assert cfg.clock_period == 21e-9
    assert load_config().to_json() == cfg.to_json()


def test_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# demo\ncircuit.v_in = 3.3\nopt.r_max = 2e5  # ohms\nclock_period = 62ns\n"
                    "rng_seed = 4\nlayout.mode = predefined\n")
    cfg = load_config(path, {"opt.r_max": "250000", "train.seed": "9"})
    assert cfg.circuit.v_in == 3.3
    assert cfg.opt.r_max == 250e3
    assert cfg.clock_period == 62e-9
    assert cfg.layout.mode == "predefined"
    # rng_seed fans out except where a stage seed is explicit
    assert (cfg.opt.rng_seed, cfg.layout.rng_seed, cfg.train.seed) == (4, 4, 9)


def test_text_roundtrip():
    cfg = build_config({"opt.init": "1e5, 2e5", "material.res_per_length_z": "120"})
    back = build_config(parse_config_text(cfg.to_text()))
    assert back.to_json() == cfg.to_json()
    assert back.opt.init == (1e5, 2e5)


def test_optional_and_bool_values():
    cfg = build_config({"opt.step_size_alpha": "none"})
    assert cfg.opt.step_size_alpha is None


@pytest.mark.parametrize("values,match", [
    ({"opt.nope": "1"}, "unknown config key"),
    ({"nosection.x": "1"}, "unknown config section"),
    ({"verbose": "1"}, "unknown config key"),
    ({"opt.r_min": "abc"}, "bad value"),
    ({"opt.r_min": "4e5"}, "r_min"),
    ({"clock_period": "0"}, "clock_period"),
])
def test_invalid_config(values, match):
    with pytest.raises(ConfigError, match=match):
        build_config(values)


def test_parse_errors():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2\n")


def test_known_keys_cover_sections():
    keys = known_keys()
    for key in ("circuit.send_resistance", "opt.patience", "layout.iterations",
                "loss_weights.w_len", "material.trace_width_z", "train.lr", "clock_period"):
        assert key in keys
