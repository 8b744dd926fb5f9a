import csv
import subprocess
import sys

import pytest

from whtpack.cli import EXIT_CONFIG, EXIT_IO, EXIT_PARTIAL, main, parse_args
from whtpack.cnn import load_checkpoint
from whtpack.experiment import CSV_FIELDS, read_metrics
from whtpack.tensorio import load_tensor


@pytest.fixture(scope="module")
def tree64(synth_tree):
    return synth_tree(classes=4, per_class=10, size=64)


@pytest.fixture(scope="module")
def tree256(synth_tree):
    return synth_tree(classes=2, per_class=4, size=256)


def test_gen_synthetic(tmp_path, capsys):
    assert main(["gen-synthetic", "--out", str(tmp_path), "--classes", "3", "--per-class", "5", "--size", "32"]) == 0
    dirs = sorted(p for p in tmp_path.iterdir() if p.is_dir())
    assert len(dirs) == 3
    assert all(len(list(d.glob("*.png"))) == 5 for d in dirs)
    assert "wrote 15 images" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["--classes", "1"], ["--classes", "9"], ["--size", "48"], ["--per-class", "2"], ["--variant", "easy"],
])
def test_gen_synthetic_rejects(tmp_path, argv):
    out = tmp_path / "x"
    assert main(["gen-synthetic", "--out", str(out)] + argv) == EXIT_CONFIG
    assert not out.exists()


def test_compress_reports_ratio(tree256, tmp_path, capsys):
    emit = tmp_path / "feat"
    assert main(["compress", "--in", str(tree256), "--method", "fixed", "--emit", str(emit)]) == 0
    out = capsys.readouterr().out
    assert "196608 -> 5632 (34.9x)" in out
    files = sorted(emit.rglob("*.whtc"))
    assert len(files) == 8
    assert load_tensor(files[0]).shape == (64, 88, 1)
    assert {f.parent.name for f in files} == {p.name for p in tree256.iterdir() if p.is_dir()}


def test_compress_inner_too_large(tree256, tmp_path):
    emit = tmp_path / "feat"
    assert main(["compress", "--in", str(tree256), "--inner", "300", "--emit", str(emit)]) == EXIT_CONFIG
    assert not emit.exists()


def test_compress_adaptive_beta_csv(tree64, tmp_path):
    path = tmp_path / "beta.csv"
    assert main(["compress", "--in", str(tree64), "--method", "adaptive", "--size", "64",
                 "--ladder", "4,8,16,32", "--inner", "8", "--beta-csv", str(path)]) == 0
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert list(rows[0]) == ["image_index", "beta", "inner_h", "inner_w"]
    assert all(0.0 < float(r["beta"]) <= 1.0 and int(r["inner_h"]) in (4, 8, 16, 32) for r in rows)


def test_compress_beta_csv_needs_adaptive(tree64, tmp_path):
    assert main(["compress", "--in", str(tree64), "--size", "64", "--inner", "8",
                 "--beta-csv", str(tmp_path / "b.csv")]) == EXIT_CONFIG


def test_compress_missing_input(tmp_path):
    assert main(["compress", "--in", str(tmp_path / "nope"), "--size", "64", "--inner", "8"]) == EXIT_CONFIG


def test_train_metrics_and_checkpoint(tree64, tmp_path, capsys):
    metrics, ckpt = tmp_path / "m.csv", tmp_path / "model.whtm"
    argv = ["train", "--in", str(tree64), "--size", "64", "--arch", "desk", "--inner", "8", "--epochs", "3",
            "--gamma", "8", "--lambda", "16", "--metrics", str(metrics), "--checkpoint", str(ckpt)]
    assert main(argv) == 0
    rows = read_metrics(metrics)
    assert [r.epoch for r in rows] == [1, 2, 3]
    assert rows[0].method == "fixed_region"
    model = load_checkpoint(ckpt)
    assert model.input_shape == (16, 22, 1)
    assert "3 epochs" in capsys.readouterr().out
    assert main(argv) == 0
    assert len(read_metrics(metrics)) == 6


@pytest.mark.parametrize("extra", [["--gamma", "0"], ["--lambda", "4"], ["--epochs", "0"], ["--val-fraction", "1"]])
def test_train_rejects(tree64, extra):
    assert main(["train", "--in", str(tree64), "--size", "64", "--inner", "8"] + extra) == EXIT_CONFIG


def test_bench_two_methods(tree64, tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--in", str(tree64), "--methods", "fixed,dct", "--gammas", "8", "--epochs", "2",
                 "--out", str(out), "--plots"]) == 0
    with open(out / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert [s["method"] for s in summary] == ["fixed_region", "dct"]
    with open(out / "metrics.csv") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_FIELDS
    assert len(read_metrics(out / "metrics.csv")) == 4
    assert (out / "summary.txt").read_text().startswith("method")
    assert (out / "plots" / "val_acc_gamma8_lambda100.svg").exists()
    assert "ratio_vs_fixed" in capsys.readouterr().out


def test_bench_partial_failure(tree64, tmp_path, capsys):
    out = tmp_path / "bench"
    code = main(["bench", "--in", str(tree64), "--methods", "fixed,dct", "--arch", "paper", "--gammas", "8",
                 "--epochs", "1", "--out", str(out)])
    assert code == EXIT_PARTIAL
    assert "FAILED fixed_region" in capsys.readouterr().err
    assert {r.method for r in read_metrics(out / "metrics.csv")} == {"dct"}


def test_bench_rejects_unknown_method(tree64, tmp_path):
    assert main(["bench", "--in", str(tree64), "--methods", "fixed,png", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nin = data\ngamma = 16\nlambda = 200\nmethod = dct\n")
    args = parse_args(["train", "--config", str(cfg)])
    assert (args.input, args.gamma, args.lam, args.method) == ("data", 16, 200, "dct")
    args = parse_args(["train", "--config", str(cfg), "--gamma", "32"])
    assert args.gamma == 32 and args.lam == 200


@pytest.mark.parametrize("text", ["bogus = 1\n", "gamma = many\n", "arch = huge\n", "no equals sign\n"])
def test_config_file_errors(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("in = data\n" + text)
    assert main(["train", "--config", str(cfg)]) == EXIT_CONFIG


def test_config_file_missing(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.cfg"), "--in", "x"]) == EXIT_IO


def test_help_lists_defaults():
    out = subprocess.run([sys.executable, "-m", "whtpack", "train", "--help"],
                         capture_output=True, text=True, check=True).stdout
    assert "--gamma" in out and "(default: 8)" in out
    assert "(default: 100)" in out and "(default: paper)" in out
