import json

import pytest

from sempo.config import Config, ConfigError, desk, full, load_config, tiny


def test_derived_defaults():
    c = desk()
    assert (c.l, c.n_freq, c.n_patches, c.alpha, c.d_h, c.stride) == (512, 257, 8, 128.0, 256, 64)


def test_full_preset():
    c = full()
    assert c.horizons == [96, 192, 336, 720]
    assert (c.model.s, c.model.d_p, c.model.heads, c.mop.i, c.easd.n_m) == (6, 256, 16, 128, 4)


def test_json_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(tiny().to_json())
    assert load_config(path) == tiny()


def test_partial_json_uses_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"d_p": 32, "heads": 4}}))
    c = load_config(path)
    assert c.model.d_p == 32 and c.model.l_p == 64


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv("SEMPO_SEED", "42")
    assert load_config("tiny").train.seed == 42
    monkeypatch.setenv("SEMPO_SEED", "x")
    with pytest.raises(ConfigError, match="SEMPO_SEED"):
        load_config("tiny")


@pytest.mark.parametrize("bad,msg", [
    ({"model": {"d_p": 10, "heads": 3}}, "divisible"),
    ({"data": {"l": 31}}, "even"),
    ({"easd": {"alpha": 400.0}}, "alpha"),
    ({"model": {"horizons": [8, 8]}}, "duplicates"),
    ({"easd": {"eval_masks": "random"}}, "eval_masks"),
    ({"model": {"bogus": 1}}, "unknown keys"),
    ({"extra": {}}, "unknown config section"),
])
def test_invalid(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        Config.from_dict(bad)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)
