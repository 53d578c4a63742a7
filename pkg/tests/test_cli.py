import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from gatenet import cli, metrics
from gatenet.data import load_image, netpbm, read_dataset
from gatenet.training import load_checkpoint

TINY = ["--input-size", "32", "--block-channels", "4,4,4,4,4", "--convs-per-block", "1", "--epochs", "1"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth-data", "--seed", "3", "--count", "8", "--size", "32", "--out-dir", str(root / "train")]) == 0
    assert cli.main(["synth-data", "--seed", "4", "--count", "4", "--size", "32", "--out-dir", str(root / "test")]) == 0
    code = cli.main(["train", "--data", str(root / "train"), "--test-data", str(root / "test"),
                     "--out-dir", str(root / "run")] + TINY)
    assert code == 0
    return root


def test_synth_data_layout(workspace):
    names = sorted(os.listdir(workspace / "train" / "images"))
    assert names == [f"{k:04d}.ppm" for k in range(8)]
    assert len(read_dataset(workspace / "train")) == 8


def test_train_outputs(workspace):
    run = workspace / "run"
    assert {"config.txt", "run_log.csv", "eval_log.csv", "checkpoint.gnet"} <= set(os.listdir(run))
    state = load_checkpoint(run / "checkpoint.gnet")
    assert state.iteration == 2 and state.config.block_channels == (4, 4, 4, 4, 4)
    assert "epochs = 1" in (run / "config.txt").read_text()


def test_infer_matches_library(workspace, tmp_path):
    ckpt = workspace / "run" / "checkpoint.gnet"
    out = tmp_path / "pred"
    assert cli.main(["infer", "--checkpoint", str(ckpt), "--images", str(workspace / "test"), "--out-dir", str(out)]) == 0
    model, _ = cli._model_from_checkpoint(str(ckpt))
    for name in sorted(os.listdir(workspace / "test" / "images")):
        image = load_image(workspace / "test" / "images" / name)
        expected = np.rint(model.predict(image[None])[0] * 255)
        with open(out / name.replace(".ppm", ".pgm"), "rb") as fh:
            got = netpbm.decode(fh.read())
        np.testing.assert_array_equal(got, expected)


def test_eval_writes_csvs(workspace, tmp_path):
    pred = tmp_path / "pred"
    cli.main(["infer", "--checkpoint", str(workspace / "run" / "checkpoint.gnet"),
              "--images", str(workspace / "test"), "--out-dir", str(pred)])
    assert cli.main(["eval", "--pred-dir", str(pred), "--gt-dir", str(workspace / "test" / "masks"),
                     "--out-dir", str(tmp_path / "scores")]) == 0
    with open(tmp_path / "scores" / "metrics.csv") as fh:
        rows = dict(list(csv.reader(fh))[1:])
    rep = metrics.evaluate_dataset(str(pred), str(workspace / "test" / "masks"))
    assert float(rows["mae"]) == pytest.approx(rep.mae, abs=1e-6)
    assert (tmp_path / "scores" / "pr_curve.csv").exists()


def test_resume_via_cli(workspace, tmp_path):
    code = cli.main(["train", "--data", str(workspace / "train"), "--out-dir", str(tmp_path / "more"),
                     "--resume", str(workspace / "run" / "checkpoint.gnet")] + TINY[:-2] + ["--epochs", "2"])
    assert code == 0
    assert load_checkpoint(tmp_path / "more" / "checkpoint.gnet").iteration == 4


def test_resume_with_other_architecture_is_data_error(workspace, tmp_path, capsys):
    code = cli.main(["train", "--data", str(workspace / "train"), "--out-dir", str(tmp_path / "x"),
                     "--resume", str(workspace / "run" / "checkpoint.gnet"), "--context", "aspp"] + TINY)
    assert code == 2
    assert "context" in capsys.readouterr().err


def test_gate_stats_csv(workspace, tmp_path, capsys):
    out = tmp_path / "gates.csv"
    assert cli.main(["gate-stats", "--checkpoint", str(workspace / "run" / "checkpoint.gnet"),
                     "--data", str(workspace / "test"), "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["gate", "level1", "level2", "level3", "level4", "level5"]
    assert [r[0] for r in rows[1:]] == ["g1", "g2"]
    assert all(0 < float(v) < 1 for r in rows[1:] for v in r[1:])
    assert "trend" in capsys.readouterr().out


def test_gate_trend():
    assert cli.gate_trend(np.arange(5.0), -np.arange(5.0))
    assert not cli.gate_trend(np.arange(5.0), np.arange(5.0))


def test_gradcheck_exit_status(capsys):
    assert cli.main(["gradcheck", "--cases", "2"]) == 0
    assert "passed" in capsys.readouterr().out


def test_usage_errors_exit_1(tmp_path):
    assert cli.main([]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--bogus"])
    assert info.value.code == 1
    assert cli.main(["synth-data", "--count", "0", "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["train", "--data", str(tmp_path), "--out-dir", str(tmp_path), "--set", "lr=0.1"]) == 1


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.gnet"
    bad.write_bytes(b"not a checkpoint")
    assert cli.main(["infer", "--checkpoint", str(bad), "--images", str(tmp_path), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["eval", "--pred-dir", str(tmp_path / "none"), "--gt-dir", str(tmp_path)]) == 2
    assert "gatenet eval" in capsys.readouterr().err


def test_config_file_and_overrides(workspace, tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("input_size = 32\nblock_channels = 4,4,4,4,4\nconvs_per_block = 1\nepochs = 3\n")
    out = tmp_path / "cfg"
    code = cli.main(["train", "--data", str(workspace / "train"), "--out-dir", str(out), "--config", str(conf),
                     "--set", "epochs=1", "--augment", "false"])
    assert code == 0
    text = (out / "config.txt").read_text()
    assert "epochs = 1" in text and "augment = false" in text


def test_ablate_tiny(tmp_path):
    code = cli.main(["ablate", "--synth-seed", "2", "--train-count", "4", "--test-count", "2", "--seeds", "0",
                     "--out-dir", str(tmp_path)] + TINY)
    assert code == 0
    with open(tmp_path / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == ["fpn", "gates", "fold_aspp", "full"]


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "gatenet.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("synth-data", "train", "eval", "infer", "gradcheck", "gate-stats", "ablate"):
        assert name in out.stdout
