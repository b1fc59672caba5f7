import csv
import json

import numpy as np
import pytest

from dtgn.cli import main
from dtgn.data import write_pgm

TINY = {
    "data": {"count": 16, "frames": 8, "size": 16, "glyph_count": 30, "perturbations": 3},
    "model": {"generator_channels": [4, 6], "expert_channels": [4, 4, 6, 6], "disc_channels": [4, 4, 4, 4],
              "codebook_size": 16, "vq_hidden": 16, "embedding_hidden": 16},
    "training": {"expert": {"epochs": 1, "batch_size": 4}, "vq": {"epochs": 1, "batch_size": 16},
                 "twin_supervised": {"epochs": 2, "batch_size": 8}, "twin": {"epochs": 1, "batch_size": 4}},
    "eval": {"n": 2, "items": 3, "sweep": [0.3, 0.7], "glyph_n": 3},
}


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    return root, cfg


def run(root, cfg, *argv):
    return main([*argv, "--config", str(cfg), "--workdir", str(root / "work"), "--threads", "1"])


def test_twin_check(capsys):
    assert main(["twin-check", "--models", "5", "--queries", "2"]) == 0
    first = capsys.readouterr().out
    assert "max deviation" in first and "<= 1e-9" in first
    assert main(["twin-check", "--models", "5", "--queries", "2"]) == 0
    second = capsys.readouterr().out
    assert first.splitlines()[1] == second.splitlines()[1]


def test_usage_errors(capsys):
    assert main(["twin-check", "--models", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "nonsense"])
    assert exc.value.code == 2


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": {"unknown": 1}}')
    assert main(["data", "gen-echo", "--config", str(bad), "--workdir", str(tmp_path)]) == 2


def test_twin_before_expert(tmp_path, capsys):
    assert main(["train", "twin", "--workdir", str(tmp_path)]) == 1
    assert "MissingCheckpointError" in capsys.readouterr().err
    assert main(["train", "twin-supervised", "--workdir", str(tmp_path)]) == 1


def test_gen_echo_reproducible(tiny, tmp_path):
    root, cfg = tiny
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(root, cfg, "data", "gen-echo", "--seed", "7", "--out", str(a)) == 0
    assert run(root, cfg, "data", "gen-echo", "--seed", "7", "--out", str(b)) == 0
    assert (a / "metadata.csv").read_bytes() == (b / "metadata.csv").read_bytes()
    assert len([p for p in a.iterdir() if p.is_dir()]) == 16
    assert json.loads((tmp_path / "a.config.json").read_text())["seed"] == 7


def test_ingest_reports_short_clip(tmp_path, capsys):
    for vid, n in (("short", 45), ("ok", 64)):
        (tmp_path / vid).mkdir()
        for t in range(n):
            write_pgm(tmp_path / vid / f"frame_{t:04d}.pgm", np.zeros((4, 4)))
    (tmp_path / "metadata.csv").write_text("videoId,ef,fps,split\nshort,0.5,30,train\nok,0.4,32,train\n")
    assert main(["data", "ingest", str(tmp_path)]) == 0
    assert "discarded: 1 (too short)" in capsys.readouterr().out


def test_echo_pipeline(tiny, capsys):
    root, cfg = tiny
    work = root / "work"
    assert run(root, cfg, "data", "gen-echo") == 0
    assert run(root, cfg, "train", "expert") == 0
    assert run(root, cfg, "train", "twin", "--epochs", "4") == 0
    records = [json.loads(x) for x in (work / "twin.log.jsonl").read_text().splitlines()]
    assert [(r["w_reconstruction"], r["w_adversarial"], r["w_expert"]) for r in records] == [
        (1, 0, 0), (1, 0, 0), (1, 0, 0), (1, 3, 0)]
    assert json.loads((work / "twin.config.json").read_text())["training"]["twin"]["epochs"] == 4

    assert run(root, cfg, "train", "twin", "--epochs", "5", "--resume") == 0
    assert len((work / "twin.log.jsonl").read_text().splitlines()) == 5

    assert run(root, cfg, "eval", "--out", str(root / "eval1"), "--n", "1") == 0
    assert run(root, cfg, "eval", "--out", str(root / "eval3"), "--n", "3") == 0
    r1 = json.loads((root / "eval1" / "report.json").read_text())
    r3 = json.loads((root / "eval3" / "report.json").read_text())
    assert r3["extra"]["n"] == 3 and r1["n_items"] == 2  # two test clips
    assert {"SSIM", "R2", "MAE", "RMSE"} <= set(r3["counterfactual"])
    assert "controllability" in r3["extra"]
    assert (root / "eval3" / "config.resolved.json").exists()
    with open(root / "eval3" / "report.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2

    vid = (work / "echo" / "metadata.csv").read_text().splitlines()[1].split(",")[0]
    out = root / "infer"
    assert run(root, cfg, "infer", "--video", vid, "--ef", "0.6", "--n", "3", "--out", str(out)) == 0
    assert len(list((out / "factual").glob("frame_*.pgm"))) == 8
    assert len(list((out / "counterfactual").glob("frame_*.pgm"))) == 8
    rows = (out / "areas.csv").read_text().splitlines()
    assert rows[0] == "frame,source_area,factual_area,counterfactual_area" and len(rows) == 9
    assert run(root, cfg, "infer", "--video", "nope", "--ef", "0.6", "--out", str(out)) == 1
    assert run(root, cfg, "infer", "--video", vid, "--ef", "1.5", "--out", str(out)) == 2


def test_ablation_flag(tiny):
    root, cfg = tiny
    work = root / "work"
    if not (work / "expert.dtgn").exists():
        pytest.skip("needs the echo pipeline checkpoint")
    abl = root / "abl"
    abl.mkdir(exist_ok=True)
    (abl / "expert.dtgn").write_bytes((work / "expert.dtgn").read_bytes())
    assert main(["train", "twin", "--ablate", "conditional-only", "no-adversarial", "--epochs", "4",
                 "--config", str(cfg), "--workdir", str(abl), "--data", str(work / "echo")]) == 0
    resolved = json.loads((abl / "twin.config.json").read_text())["training"]
    assert resolved["conditional_only"] and resolved["no_adversarial"] and not resolved["no_expert"]
    last = json.loads((abl / "twin.log.jsonl").read_text().splitlines()[-1])
    assert last["w_adversarial"] == 0 and last["d_updates"] == 0


def test_glyph_pipeline(tiny):
    root, cfg = tiny
    work = root / "work"
    assert run(root, cfg, "data", "gen-glyph") == 0
    assert run(root, cfg, "train", "vq") == 0
    assert run(root, cfg, "train", "twin-supervised") == 0
    assert run(root, cfg, "eval", "--kind", "glyph", "--out", str(root / "geval")) == 0
    doc = json.loads((root / "geval" / "report.json").read_text())
    assert doc["extra"]["kind"] == "glyph" and doc["extra"]["n"] == 3
    assert {"MSE", "SSIM(I_gt, I_rec)", "SSIM(I_rec, I_pred)", "SSIM(I_gt, I_pred)"} <= set(doc["factual"])
