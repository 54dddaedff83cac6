import csv
import json
import subprocess
import sys

import pytest

from ibis.cli import build_parser, main
from ibis.data import load_dataset

TINY = ["--classes", "5", "--per-class", "5", "--seed", "3"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train (2 epochs) -> svm-fit on a tiny set, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data, models = root / "tiny.ibds", root / "models"
    assert main(["synth", *TINY, "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(models), "--epochs", "2", "--batch-size", "4"]) == 0
    assert main(["svm-fit", "--data", str(data), "--models", str(models)]) == 0
    return root, data, models


def _csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_counts_and_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.ibds", tmp_path / "b.ibds"
    assert main(["synth", "--classes", "5", "--per-class", "100", "--seed", "7", "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert "2000 windows" in out and "walking" in out
    assert len(load_dataset(a)) == 500 * 4
    assert main(["synth", "--classes", "5", "--per-class", "100", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_rejects_six_classes(tmp_path, capsys):
    assert main(["synth", "--classes", "6", "--out", str(tmp_path / "x.ibds")]) == 2
    assert "{5, 8}" in capsys.readouterr().err


def test_unknown_flag_and_bad_values_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path / "x"), "--bogus", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "d", "--out", "o", "--arch", "resnet"])
    assert exc.value.code == 2


def test_help_lists_every_key(capsys):
    parser = build_parser()
    sub = [a for a in parser._actions if a.dest == "command"][0]
    for name, p in sub.choices.items():
        with pytest.raises(SystemExit) as exc:
            main([name, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)


def test_train_writes_checkpoints_and_timing(pipeline):
    root, _, models = pipeline
    assert sorted(p.name for p in models.glob("*.ibck")) == [f"antenna_{a}.ibck" for a in range(4)]
    rows = _csv_rows(models / "training_log.csv")
    for a in range(4):
        mine = [r for r in rows if r["antenna"] == str(a)]
        assert [r["epoch"] for r in mine] == ["1", "2"]
        assert all(float(r["seconds"]) >= 0 for r in mine)


def test_svm_fit_prints_default_c(pipeline, capsys):
    _, data, models = pipeline
    assert main(["svm-fit", "--data", str(data), "--models", str(models), "--out", str(models / "svm2")]) == 0
    out = capsys.readouterr().out
    assert "C = 1.0" in out
    assert len(list((models / "svm2").glob("*.ibsv"))) == 4


def test_svm_fit_rejects_zero_c(pipeline):
    _, data, models = pipeline
    assert main(["svm-fit", "--data", str(data), "--models", str(models), "--c", "0"]) == 2


def test_missing_artifacts_exit_4(pipeline, tmp_path):
    _, data, models = pipeline
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["svm-fit", "--data", str(data), "--models", str(empty)]) == 4
    assert main(["eval", "--data", str(data), "--models", str(empty), "--out", str(tmp_path / "r")]) == 4
    assert main(["eval", "--data", str(data), "--models", str(models), "--svm", str(empty),
                 "--out", str(tmp_path / "r")]) == 4
    assert main(["region-plot", "--data", str(data), "--models", str(models), "--svm", str(empty),
                 "--out", str(tmp_path / "g")]) == 4


def test_io_errors_exit_3(tmp_path):
    assert main(["train", "--data", str(tmp_path / "absent.ibds"), "--out", str(tmp_path / "m")]) == 3
    bad = tmp_path / "bad.ibds"
    bad.write_bytes(b"not a dataset at all, definitely not")
    assert main(["eval", "--data", str(bad), "--models", str(tmp_path), "--out", str(tmp_path / "r")]) == 3


def test_eval_three_modes(pipeline, tmp_path):
    _, data, models = pipeline
    out = tmp_path / "reports"
    assert main(["eval", "--data", str(data), "--models", str(models), "--svm", str(models), "--out", str(out)]) == 0
    modes = sorted(p.name for p in out.iterdir())
    assert modes == ["network_pre", "svm_post", "svm_pre"]
    for mode in modes:
        doc = json.loads((out / mode / "report.json").read_text())
        assert {"accuracy", "macro_f1", "macro_recall", "macro_precision"} <= set(doc)
        assert (out / mode / "confusion.csv").is_file()


def test_region_plot_grid_size_and_determinism(pipeline, tmp_path):
    _, data, models = pipeline
    args = ["region-plot", "--data", str(data), "--models", str(models), "--svm", str(models), "--resolution", "50"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    grid = (tmp_path / "a" / "region_grid.csv").read_bytes()
    assert len(_csv_rows(tmp_path / "a" / "region_grid.csv")) == 2500
    assert grid == (tmp_path / "b" / "region_grid.csv").read_bytes()


def test_arch_check(capsys):
    assert main(["arch-check"]) == 0
    out = capsys.readouterr().out
    assert "3 documented divergences" in out and "0 mismatches" in out
    assert main(["arch-check", "--classes", "8"]) == 0
    assert main(["arch-check", "--classes", "6"]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny run\nclasses = 5\nper_class = 4\nseed = 11\n")
    a, b, c = tmp_path / "a.ibds", tmp_path / "b.ibds", tmp_path / "c.ibds"
    assert main(["synth", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["synth", "--per-class", "4", "--seed", "11", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["synth", "--config", str(cfg), "--seed", "12", "--out", str(c)]) == 0
    assert load_dataset(c).seed == 12
    cfg.write_text("colour = blue\n")
    assert main(["synth", "--config", str(cfg), "--out", str(a)]) == 2
    assert main(["synth", "--config", str(tmp_path / "absent.cfg"), "--out", str(a)]) == 3


def test_seed_environment_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("IBIS_SEED", "21")
    assert main(["synth", "--per-class", "3", "--out", str(tmp_path / "e.ibds")]) == 0
    assert load_dataset(tmp_path / "e.ibds").seed == 21
    assert main(["synth", "--per-class", "3", "--seed", "5", "--out", str(tmp_path / "f.ibds")]) == 0
    assert load_dataset(tmp_path / "f.ibds").seed == 5
    monkeypatch.setenv("IBIS_SEED", "abc")
    assert main(["synth", "--per-class", "3", "--out", str(tmp_path / "g.ibds")]) == 2


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "ibis", "arch-check"], capture_output=True, text=True)
    assert done.returncode == 0 and "distinct" in done.stdout
    done = subprocess.run([sys.executable, "-m", "ibis", "nonsense"], capture_output=True, text=True)
    assert done.returncode == 2
