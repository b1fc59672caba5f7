import json

import numpy as np
import pytest

from dtgn.data import gen_echo_dataset, gen_morpho_dataset
from dtgn.errors import ConfigError, MissingCounterfactualLabelError, MissingExpertError
from dtgn.nn import VQConfig
from dtgn.tensor import load
from dtgn.training import (
    LossSchedule,
    TrainConfig,
    effective_weights,
    load_expert,
    load_video_generator,
    load_vq,
    loss_schedule_at,
    train_expert,
    train_twin_semisupervised,
    train_twin_supervised,
    train_vq,
)

SMALL = dict(resolution=16, frames=8, batch_size=4, generator_channels=(4, 6), expert_channels=(4, 4, 6, 6),
             disc_channels=(4, 4, 4, 4), lr_generator=1e-3, lr_discriminator=1e-3, lr_expert=1e-3)


@pytest.fixture(scope="module")
def clips():
    return gen_echo_dataset(12, 8, 16, np.random.default_rng(0))


@pytest.fixture(scope="module")
def expert_ckpt(clips, tmp_path_factory):
    path = tmp_path_factory.mktemp("expert") / "expert.dtgn"
    train_expert(TrainConfig(epochs=2, **SMALL), clips, path)
    return path


def _arrays(path):
    return load(path)[0]


def test_schedule_examples():
    s = LossSchedule()
    assert loss_schedule_at(s, 0) == (1, 0, 0)
    assert loss_schedule_at(s, 2) == (1, 0, 0)
    assert loss_schedule_at(s, 3) == (1, 3, 0)
    assert loss_schedule_at(s, 5) == (1, 3, 1)
    assert loss_schedule_at(s, 50) == (1, 3, 1)
    with pytest.raises(ValueError):
        loss_schedule_at(s, -1)
    with pytest.raises(ConfigError):
        LossSchedule(discriminator_weight=-1)


def test_ablation_weights():
    cfg = TrainConfig(no_adversarial=True)
    assert effective_weights(cfg, 6) == (1, 0, 1)
    cfg = TrainConfig(no_expert=True)
    assert effective_weights(cfg, 6) == (1, 3, 0)


def test_config_roundtrip_and_validation():
    cfg = TrainConfig(epochs=3, schedule={"expert_start_epoch": 2})
    assert cfg.schedule.expert_start_epoch == 2
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 1, "bogus": 2})
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_expert_checkpoint_and_log(clips, tmp_path):
    log = tmp_path / "expert.log.jsonl"
    res = train_expert(TrainConfig(epochs=2, **SMALL), clips, tmp_path / "e.dtgn", log)
    records = [json.loads(line) for line in log.read_text().splitlines()]
    assert [r["epoch"] for r in records] == [0, 1]
    assert {"train_l1", "val_MAE", "val_R2", "val_RMSE"} <= set(records[0])
    loaded = load_expert(tmp_path / "e.dtgn")
    for a, b in zip(loaded.parameters(), res.model.parameters()):
        np.testing.assert_array_equal(a.data, b.data)
    assert load(tmp_path / "e.dtgn")[1]["best_epoch"] == res.extra["best_epoch"]


def test_twin_needs_expert(clips):
    with pytest.raises(MissingExpertError):
        train_twin_semisupervised(TrainConfig(epochs=1, **SMALL), clips, None)


def test_supervised_needs_glyphs(clips):
    with pytest.raises(MissingCounterfactualLabelError):
        train_twin_supervised(TrainConfig(epochs=1, **SMALL), clips, None)


def test_schedule_and_alternation(clips, expert_ckpt, tmp_path):
    cfg = TrainConfig(epochs=6, **SMALL)
    res = train_twin_semisupervised(cfg, clips, load_expert(expert_ckpt), tmp_path / "t.dtgn")
    steps = res.history[0]["steps"]
    assert steps == 3  # 10 training clips in batches of 4
    for rec in res.history:
        e = rec["epoch"]
        assert rec["g_updates"] == steps
        assert rec["d_updates"] == (steps if e >= 3 else 0)
        assert (rec["w_reconstruction"], rec["w_adversarial"], rec["w_expert"]) == loss_schedule_at(LossSchedule(), e)
        if e < 3:
            assert rec["loss_adversarial"] == 0.0 and rec["loss_discriminator"] == 0.0
        if e < 5:
            assert rec["loss_expert"] == 0.0
        else:
            assert rec["loss_expert"] > 0.0


def test_early_epochs_are_reconstruction_only(clips, expert_ckpt):
    """Before epoch 3 the adversarial and expert terms add exactly nothing."""
    expert = load_expert(expert_ckpt)
    full = train_twin_semisupervised(TrainConfig(epochs=3, **SMALL), clips, expert)
    plain = train_twin_semisupervised(TrainConfig(epochs=3, no_adversarial=True, no_expert=True, **SMALL),
                                      clips, expert)
    for a, b in zip(full.model.parameters(), plain.model.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_resume_matches_continuous_run(clips, expert_ckpt, tmp_path):
    expert = load_expert(expert_ckpt)
    cfg = dict(SMALL, schedule={"discriminator_start_epoch": 1, "expert_start_epoch": 2})
    train_twin_semisupervised(TrainConfig(epochs=3, **cfg), clips, expert, tmp_path / "full.dtgn")
    train_twin_semisupervised(TrainConfig(epochs=2, **cfg), clips, expert, tmp_path / "part.dtgn")
    train_twin_semisupervised(TrainConfig(epochs=3, **cfg), clips, expert, tmp_path / "part.dtgn", resume=True)
    a, b = _arrays(tmp_path / "full.dtgn"), _arrays(tmp_path / "part.dtgn")
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k], err_msg=k)


def test_twin_training_is_deterministic_and_freezes_expert(clips, expert_ckpt, tmp_path):
    before = expert_ckpt.read_bytes()
    cfg = TrainConfig(epochs=6, **SMALL)
    train_twin_semisupervised(cfg, clips, load_expert(expert_ckpt), tmp_path / "a.dtgn")
    expert = load_expert(expert_ckpt)
    params = [p.data.copy() for p in expert.parameters()]
    train_twin_semisupervised(cfg, clips, expert, tmp_path / "b.dtgn")
    assert expert_ckpt.read_bytes() == before
    for p, q in zip(params, expert.parameters()):
        assert p.tobytes() == q.data.tobytes()
    assert (tmp_path / "a.dtgn").read_bytes() == (tmp_path / "b.dtgn").read_bytes()
    gen = load_video_generator(tmp_path / "a.dtgn")
    assert gen.config.skip and gen.config.size == 16


@pytest.mark.parametrize("flag", ["no_adversarial", "no_expert", "conditional_only"])
def test_ablations_train(clips, expert_ckpt, flag):
    res = train_twin_semisupervised(TrainConfig(epochs=6, **{flag: True}, **SMALL), clips, load_expert(expert_ckpt))
    last = res.history[-1]
    if flag == "no_adversarial":
        assert last["d_updates"] == 0 and last["w_adversarial"] == 0
    if flag == "no_expert":
        assert last["loss_expert"] == 0 and last["w_expert"] == 0
    if flag == "conditional_only":
        assert last["d_updates"] == last["steps"] and last["loss_expert"] > 0


def test_vq_and_supervised_twin(tmp_path):
    ds = gen_morpho_dataset(20, 3, np.random.default_rng(1))
    cfg = TrainConfig(epochs=2, batch_size=16, lr_generator=2e-3)
    vq_res = train_vq(cfg, ds, tmp_path / "vq.dtgn", vq_config=VQConfig(size=16, codebook_size=16, hidden=16))
    assert {"val_ssim", "val_codes_used"} <= set(vq_res.history[-1])
    before = (tmp_path / "vq.dtgn").read_bytes()
    vq = load_vq(tmp_path / "vq.dtgn")
    snapshot = [p.data.copy() for p in vq.parameters()]
    res = train_twin_supervised(TrainConfig(epochs=3, batch_size=8, lr_generator=1e-3), ds, vq,
                                tmp_path / "ts.dtgn", tmp_path / "ts.log.jsonl", hidden=16)
    assert (tmp_path / "vq.dtgn").read_bytes() == before
    for p, q in zip(snapshot, vq.parameters()):
        assert p.tobytes() == q.data.tobytes()
    h = res.history
    assert h[-1]["factual_mse"] < h[0]["factual_mse"]
    assert len((tmp_path / "ts.log.jsonl").read_text().splitlines()) == 3
