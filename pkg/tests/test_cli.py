import json
import subprocess
import sys

import numpy as np
import pytest

from spinebpd.checkpoint import load_checkpoint, save_checkpoint
from spinebpd.cli import main
from spinebpd.pgm import read_pgm
from spinebpd.train import TrainConfig, train

from conftest import SMALL_MODEL


def test_generate_and_determinism(tmp_path, capsys):
    args = ["generate", "--seed", "7", "--train", "3", "--val", "1", "--test", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 1 + 3 * 6
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "wrote 6 samples" in capsys.readouterr().out


def test_generate_unwritable_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["generate", "--out", str(blocker / "sub"), "--train", "1", "--val", "1", "--test", "1"]) == 2
    assert "cannot create" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "x"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_train_smoke_and_alpha_zero(small_data, tmp_path):
    # the CLI uses the default architecture; 64x32 keeps it quick
    base = ["train", "--data", str(small_data), "--epochs", "1", "--seed", "3", "--quiet"]
    assert main(base + ["--out", str(tmp_path / "m.ckpt"), "--loss", "mse"]) == 0
    assert main(base + ["--out", str(tmp_path / "z.ckpt"), "--loss", "mse-bpd", "--alpha", "0"]) == 0
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "z.ckpt").read_bytes()
    log = [json.loads(x) for x in (tmp_path / "m.ckpt.log.jsonl").read_text().splitlines()]
    assert len(log) == 1 and all(np.isfinite(v) for v in log[0].values())
    ck = load_checkpoint(tmp_path / "m.ckpt")
    assert ck.model_config.input_height == 64 and ck.adam.step_count == 2


def test_evaluate_oracle(small_data, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["evaluate", "--data", str(small_data), "--ckpt", "oracle", "--split", "test", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pearson_r"] == 1.0 and rep["mean_radial_error"] == 0.0
    assert json.loads(capsys.readouterr().out) == rep


def test_evaluate_and_render_checkpoint(small_data, tmp_path):
    ck = train(TrainConfig(data_dir=str(small_data), epochs=1, model=SMALL_MODEL)).checkpoint
    save_checkpoint(tmp_path / "c.ckpt", ck)
    assert main(["evaluate", "--data", str(small_data), "--ckpt", str(tmp_path / "c.ckpt"),
                 "--out", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert -1 <= rep["pearson_r"] <= 1 and 0 <= rep["anova_p"] <= 1
    sid = json.loads((small_data / "manifest.json").read_text())["splits"]["test"][0]
    assert main(["render", "--data", str(small_data), "--ckpt", str(tmp_path / "c.ckpt"), "--sample", sid,
                 "--out", str(tmp_path / "o.pgm"), "--svg", str(tmp_path / "o.svg")]) == 0
    assert read_pgm(tmp_path / "o.pgm").shape == (64, 32)
    svg = (tmp_path / "o.svg").read_text()
    assert svg.count('class="gt"') == svg.count('class="pred"') == 18


def test_render_oracle(small_data, tmp_path, capsys):
    sid = json.loads((small_data / "manifest.json").read_text())["splits"]["train"][0]
    assert main(["render", "--data", str(small_data), "--ckpt", "oracle", "--sample", sid,
                 "--out", str(tmp_path / "o.pgm")]) == 0
    assert "18 ground-truth and 18 predicted" in capsys.readouterr().out
    raster = read_pgm(tmp_path / "o.pgm")
    assert not (raster == 255).any() and (raster == 208).any()


def test_bad_checkpoint_is_data_error(small_data, tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    assert main(["evaluate", "--data", str(small_data), "--ckpt", str(tmp_path / "bad.ckpt")]) == 2
    assert "magic" in capsys.readouterr().err
    assert main(["evaluate", "--data", str(tmp_path), "--ckpt", "oracle"]) == 2


def test_extract_landmarks(desk_data, tmp_path):
    sid = json.loads((desk_data / "manifest.json").read_text())["splits"]["train"][0]
    out = tmp_path / "lm.json"
    assert main(["extract-landmarks", "--mask", str(desk_data / "masks" / f"{sid}.pgm"), "--out", str(out)]) == 0
    pts = np.array(json.loads(out.read_text()))
    gt = np.array(json.loads((desk_data / "landmarks" / f"{sid}.json").read_text()))
    assert pts.shape == (72, 2)
    assert np.median(np.hypot(*((pts - gt) * [64, 128]).T)) < 2.0


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck"]) == 0
    assert "model[" in capsys.readouterr().out
    assert main(["gradcheck", "--corrupt", "bpd_loss"]) == 3
    assert "bpd_loss" in [line.split()[0] for line in capsys.readouterr().out.splitlines() if "FAIL" in line]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "spinebpd", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("spinebpd ")
