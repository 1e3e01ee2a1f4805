import json
import os

import pytest

from acnn.cli import RunConfig, run
from acnn.io import read_csv


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_no_arguments_is_usage_error(capsys):
    assert run([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_and_bad_values(capsys):
    assert run(["params", "--spec", "cnn64", "--bogus"]) == 1
    assert run(["params", "--spec", "cnn128"]) == 1
    assert run(["params"]) == 1
    assert run(["perspective", "--angle-deg", "x", "--height-m", "3", "--out", "p"]) == 1


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0


def test_params_prints_table_totals(capsys):
    assert run(["params", "--spec", "acnn-v3"]) == 0
    out = capsys.readouterr().out
    assert "total_fc5_16,2666540" in out and "total,2666458" in out


def test_gradcheck_exit_codes(capsys):
    assert run(["gradcheck", "--suite", "dense", "--suite", "conv"]) == 0
    assert "PASS dense" in capsys.readouterr().out
    assert run(["gradcheck", "--suite", "nope"]) == 1


def test_run_config_round_trip():
    cfg = RunConfig("perspective", {"angle_deg": -40.0, "rows": 96, "out": "p"}, 7, "float64")
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_config_file_and_flag_precedence(workdir):
    cfg = RunConfig("perspective", {"angle_deg": -40.0, "height_m": 8.5, "rows": 48, "out": "a"}, 3)
    (workdir / "run.json").write_text(cfg.to_json())
    assert run(["perspective", "--config", "run.json", "--rows", "32", "--no-figures"]) == 0
    rows = read_csv("a.csv")
    assert len(rows) == 32
    header = open("a.csv").readline() + open("a.csv").readlines()[1]
    echoed = json.loads(header.split("config ", 1)[1])
    assert echoed["params"]["rows"] == 32 and echoed["params"]["height_m"] == 8.5 and echoed["seed"] == 3
    # the effective configuration can be saved and replayed to the same bytes
    assert run(["perspective", "--config", "run.json", "--rows", "32", "--no-figures", "--force",
                "--save-config", "eff.json"]) == 0
    first = open("a.csv", "rb").read()
    assert run(["perspective", "--config", "eff.json", "--no-figures", "--force"]) == 0
    assert open("a.csv", "rb").read() == first


def test_config_for_other_command_rejected(workdir):
    (workdir / "run.json").write_text(RunConfig("params", {"spec": "cnn64"}).to_json())
    assert run(["perspective", "--config", "run.json", "--angle-deg", "-40", "--height-m", "8"]) == 1
    (workdir / "bad.json").write_text("{not json")
    assert run(["params", "--config", "bad.json"]) == 1


def test_perspective_outputs_and_collision(workdir):
    args = ["perspective", "--angle-deg", "-40", "--height-m", "8.5", "--out", "p"]
    assert run(args) == 0
    assert {"p.csv", "p.pgm", "p.png"} <= set(os.listdir(workdir))
    assert run(args) == 1  # exists, no --force
    assert run(args + ["--force", "--no-figures"]) == 0
    assert run(["perspective", "--angle-deg", "5", "--height-m", "8.5", "--out", "q"]) == 1


def test_thread_limit_env(workdir, monkeypatch):
    monkeypatch.setenv("ACNN_THREADS", "0")
    assert run(["params", "--spec", "cnn64"]) == 1
    monkeypatch.setenv("ACNN_THREADS", "1")
    assert run(["params", "--spec", "cnn64"]) == 0


def _count_pipeline(tag):
    assert run(["gen-synth", "--out", f"syn{tag}", "--train-per-context", "1", "--test-per-context", "1",
                "--seed", "5"]) == 0
    assert run(["train-count", "--spec", "acnn-v3", "--data", f"syn{tag}/train", "--out", f"m{tag}.json",
                "--steps", "2", "--epochs", "1", "--patches-per-scene", "8", "--batch-size", "16", "--seed", "5",
                "--no-figures"]) == 0
    assert run(["eval-count", "--ckpt", f"m{tag}.json", "--data", f"syn{tag}/test", "--stride", "8",
                "--report", f"ev{tag}.csv", "--seed", "5"]) == 0
    return open(f"ev{tag}.csv").read()


def test_counting_pipeline_is_deterministic(workdir):
    a, b = _count_pipeline("a"), _count_pipeline("b")
    strip = lambda t: "\n".join(ln for ln in t.splitlines() if not ln.startswith("# config"))
    assert strip(a) == strip(b)
    rows = read_csv("eva.csv")
    assert list(rows[0]) == ["scene", "true", "predicted", "abs_error"] and len(rows) == 12
    assert os.path.exists("eva.png")
    head = open("syna/train/annotations.csv").read()
    assert "\nimage,row,col\n" in head
    assert "scene,angle_deg,height_m,fov_deg" in open("syna/train/scenes.csv").read()
    assert run(["manifold-probe", "--ckpt", "ma.json", "--report", "probe.csv", "--steps", "5"]) == 0
    assert len(read_csv("probe.csv")) == 5
    assert run(["manifold-probe", "--ckpt", "ma.json", "--report", "probe2.csv", "--layer", "3"]) == 1


def test_deconv_pipeline(workdir):
    assert run(["gen-deconv-data", "--out", "dc", "--n", "6", "--n-val", "0", "--n-test", "3", "--size", "24",
                "--radii", "3,5"]) == 0
    assert os.path.exists("dc/test/blurred_r5/0002.pgm")
    assert run(["train-deconv", "--data", "dc", "--out", "d.json", "--radii", "3", "--filter-length", "7",
                "--steps", "3", "--batch-size", "4", "--no-figures"]) == 0
    assert run(["eval-deconv", "--ckpt", "d.json", "--data", "dc", "--radii", "3,5", "--report", "r.csv"]) == 0
    rows = read_csv("r.csv")
    assert list(rows[0]) == ["radius", "seen", "psnr_blurred", "psnr_model", "delta"]
    assert [r["seen"] for r in rows] == ["1", "0"]
    assert run(["train-deconv", "--data", "dc", "--out", "c.json", "--model", "cnn", "--radii", "3",
                "--filter-length", "7", "--steps", "2", "--no-figures"]) == 0
    assert run(["manifold-probe", "--ckpt", "c.json", "--report", "x.csv"]) == 1
    assert run(["train-deconv", "--data", "dc", "--out", "e.json", "--radii", "3,x"]) == 1
