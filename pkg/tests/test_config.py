"""Flat key=value configuration."""

import pytest

from sprawl.config import ConfigError, SimConfig, format_config, parse_config


def test_defaults_weight_rows_sum_to_one():
    cfg = SimConfig()
    for use, row in cfg.weights.items():
        assert sum(row.values()) == pytest.approx(1.0, abs=1e-12), use


def test_roundtrip_is_stable():
    cfg = SimConfig()
    text = format_config(cfg)
    again = parse_config(text)
    assert format_config(again) == text


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError):
        parse_config("honey_decy=0.5\n")
    with pytest.raises(ConfigError):
        SimConfig().set_key("weight_residential_bogus", 1.0)


def test_per_use_and_weight_keys():
    cfg = parse_config(
        "cover_target_commercial=0.15\n"
        "weight_commercial_market=0.8\n"
        "density_min_industrial=2\n"
        "scale_agents_with_area=false\n"
        "seed=42\n"
    )
    assert cfg.cover_target["commercial"] == 0.15
    assert cfg.weights["commercial"]["market"] == 0.8
    assert cfg.density_min["industrial"] == 2
    assert cfg.scale_agents_with_area is False
    assert cfg.seed == 42


def test_bad_value_reports_key():
    with pytest.raises(ConfigError) as e:
        parse_config("seed=abc\n")
    assert "seed" in str(e.value)


def test_comments_and_blanks_ignored():
    cfg = parse_config("# hello\n\nseed=9\n")
    assert cfg.seed == 9


def test_bare_group_key_needs_suffix():
    with pytest.raises(ConfigError):
        parse_config("cover_target=0.4\n")
