import json

import pytest

from dtgn.config import load_config, write_resolved
from dtgn.errors import ConfigError


def _write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_defaults():
    cfg = load_config(env={})
    assert cfg.seed == 0
    assert cfg.eval.n == 100
    assert cfg.training.schedule.discriminator_start_epoch == 3
    tc = cfg.train_config("twin")
    assert tc.resolution == 32 and tc.frames == 8


def test_precedence(tmp_path):
    path = _write(tmp_path, {"seed": 3, "data": {"count": 64}, "training": {"twin": {"epochs": 2}}})
    cfg = load_config(path, env={})
    assert (cfg.seed, cfg.data.count, cfg.training.twin.epochs) == (3, 64, 2)
    assert load_config(path, env={"DTGN_SEED": "9"}).seed == 9
    assert load_config(path, {"seed": 5}, env={"DTGN_SEED": "9"}).seed == 5
    assert cfg.train_config("twin").epochs == 2
    assert cfg.train_config("twin-supervised").epochs == 30


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"data": {"frames": 8, "colour": True}},
    {"training": {"twin": {"epoch": 3}}},
    {"training": {"schedule": {"start": 1}}},
    {"data": {"count": "many"}},
    {"data": {"size": 30}},
    {"data": {"frames": 4}},
    {"model": {"generator_skip": 1}},
    {"eval": {"n": 0}},
    {"training": {"twin": {"lr_generator": 0}}},
    {"data": []},
])
def test_invalid_documents(tmp_path, doc):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, doc), env={})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json", env={})
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad, env={})
    with pytest.raises(ConfigError):
        load_config(env={"DTGN_SEED": "seven"})


def test_resolved_roundtrip(tmp_path):
    cfg = load_config(overrides={"model": {"generator_channels": [8, 16]}}, env={})
    path = write_resolved(cfg, tmp_path)
    again = load_config(path, env={})
    assert again == cfg
    assert path.read_text() == write_resolved(again, tmp_path / "b").read_text()
