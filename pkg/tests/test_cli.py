import json

import numpy as np
import pytest

from distana.checkpoint import Checkpoint
from distana.cli import main
from distana.evaluation import dtw
from distana.io import parse_pgm, read_csv, read_wavd, sha256_file


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["gen", "--sequences", "2", "--length", "10", "--grid", "8", "--seed", "1", "--out", str(out)]) == 0
    return out


def test_gen_shapes_and_manifest(data_dir):
    files = sorted(data_dir.glob("*.wavd"))
    assert len(files) == 2
    assert read_wavd(files[0]).shape == (10, 8, 8)
    man = json.loads((data_dir / "manifest.json").read_text())
    assert man["command"] == "gen"
    present = {p.name: sha256_file(p) for p in data_dir.iterdir() if p.name != "manifest.json"}
    assert man["outputs"] == present
    assert not (data_dir / ".lock").exists()


def test_gen_is_reproducible_and_guarded(data_dir, tmp_path, capsys):
    digests = {p.name: sha256_file(p) for p in data_dir.iterdir()}
    assert main(["gen", "--sequences", "2", "--length", "10", "--grid", "8", "--seed", "1", "--out", str(data_dir)]) == 1
    assert "--force" in capsys.readouterr().err
    assert main(["gen", "--sequences", "2", "--length", "10", "--grid", "8", "--seed", "1",
                 "--out", str(data_dir), "--force"]) == 0
    assert {p.name: sha256_file(p) for p in data_dir.iterdir()} == digests


def test_gen_test_set_shape(tmp_path):
    out = tmp_path / "test"
    assert main(["gen", "--grid", "16", "--length", "150", "--sequences", "20", "--out", str(out)]) == 0
    files = sorted(out.glob("*.wavd"))
    assert len(files) == 20 and read_wavd(files[0]).shape == (150, 16, 16)


def test_locked_directory_refused(tmp_path, capsys):
    out = tmp_path / "busy"
    out.mkdir()
    (out / ".lock").write_text("123")
    assert main(["gen", "--sequences", "1", "--length", "3", "--out", str(out)]) == 1
    assert "locked" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "gen.txt"
    cfg.write_text("sequences=3\nlength=6\ngrid=5\n")
    out = tmp_path / "o"
    assert main(["gen", "--config", str(cfg), "--length", "4", "--out", str(out)]) == 0
    files = sorted(out.glob("*.wavd"))
    assert len(files) == 3 and read_wavd(files[0]).shape == (4, 5, 5)
    assert "length=4" in (out / "config.txt").read_text()
    cfg.write_text("bogus=1\n")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 2


def test_default_output_root_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DISTANA_OUT", str(tmp_path / "root"))
    assert main(["gen", "--sequences", "1", "--length", "3", "--grid", "4"]) == 0
    assert (tmp_path / "root" / "gen" / "manifest.json").exists()


def test_train_one_epoch(data_dir, tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--model", "distana4", "--epochs", "1", "--seeds", "1", "--data", str(data_dir),
                 "--out", str(out)]) == 0
    ck = Checkpoint.load(out / "distana4_seed0.ckpt")
    assert ck.n_params() == 200
    fields, rows = read_csv(out / "curves.csv")
    assert fields == ["epoch", "seed", "mse"] and len(rows) == 1


def test_unknown_model_is_usage_error(data_dir, tmp_path, capsys):
    assert main(["train", "--model", "resnet", "--data", str(data_dir), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr()
    assert "invalid choice" in err.err and err.out == ""


def test_eval_at_requires_eta(tmp_path, capsys):
    ck = tmp_path / "q.ckpt"
    Checkpoint.zeros("distana4").save(ck)
    code = main(["eval", "--checkpoint", str(ck), "--mode", "at", "--history", "2", "--data", "x",
                 "--out", str(tmp_path / "e")])
    assert code == 2
    assert "--eta" in capsys.readouterr().err
    assert not (tmp_path / "e").exists()


@pytest.fixture
def long_data(tmp_path):
    out = tmp_path / "long"
    assert main(["gen", "--sequences", "2", "--length", "150", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_eval_quiescent_matches_reference(long_data, tmp_path):
    ck = tmp_path / "q.ckpt"
    Checkpoint.zeros("distana4").save(ck)
    out = tmp_path / "e"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(long_data), "--sequences", "2",
                 "--test-snr", "4", "--out", str(out)]) == 0
    fields, rows = read_csv(out / "report.csv")
    assert fields == ["model", "train_snr", "test_snr", "mode", "eta", "history", "mean_dtw", "std_dtw"]
    seqs = [read_wavd(p) for p in sorted(long_data.glob("*.wavd"))]
    ref = np.mean([np.mean([dtw(np.zeros(120), s[30:, i, j]) for i in range(16) for j in range(16)]) for s in seqs])
    assert float(rows[0]["mean_dtw"]) == pytest.approx(ref, rel=1e-6)


def test_eval_at_report_and_strips(long_data, tmp_path):
    ck = tmp_path / "m.ckpt"
    Checkpoint.fresh("distana4", seed=1).save(ck)
    runs = []
    for mode in ("tf", "at"):
        out = tmp_path / mode
        extra = ["--eta", "0.1", "--history", "2", "--cycles", "2"] if mode == "at" else []
        assert main(["eval", "--checkpoint", str(ck), "--data", str(long_data), "--sequences", "1",
                     "--induction", "5", "--closed-loop", "10", "--mode", mode, "--dump", "1",
                     "--out", str(out), *extra]) == 0
        runs.append(out)
    assert read_csv(runs[1] / "trace.csv")[0] == ["step", "cycle", "loss"]
    rep = tmp_path / "rep"
    assert main(["report", "--in", *map(str, runs), "--out", str(rep), "--step", "4"]) == 0
    fields, rows = read_csv(rep / "report.csv")
    assert fields[0] == "run" and [r["run"] for r in rows] == ["tf", "at"]
    strip = parse_pgm((rep / "strip_000_step004.pgm").read_text())
    assert strip.shape == (16, 5 * 16 + 4)
    single = tmp_path / "single"
    assert main(["report", "--in", str(runs[0]), "--out", str(single), "--step", "4"]) == 0
    assert read_csv(single / "report.csv")[0][0] == "model"


def test_report_rejects_missing_columns(tmp_path, capsys):
    run = tmp_path / "r"
    run.mkdir()
    (run / "report.csv").write_text("model,mean_dtw\nx,1\n")
    assert main(["report", "--in", str(run), "--out", str(tmp_path / "o")]) == 1
    assert "lacks columns" in capsys.readouterr().err
