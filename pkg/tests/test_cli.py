"""Command line behaviour: exit codes, resolved configs, artifact layout."""

import os

import numpy as np
import pytest

from dpno.cli import _CONFIG_DEFAULTS, _load_config, main
from dpno.container import read_kv, read_tensor
from dpno.training import checkpoint_load


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data16"
    rc = main([
        "gen-data", "--task", "darcy", "--n-train", "6", "--n-test", "2",
        "--resolution", "16", "--seed", "3", "--out", str(data),
    ])
    assert rc == 0
    cfg = root / "train.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 2\ntrain.batch_size = 3\n"
    )
    run = root / "run"
    rc = main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)])
    assert rc == 0
    return root


def test_gen_data_rerun_byte_identical(workdir, tmp_path):
    again = tmp_path / "again"
    rc = main([
        "gen-data", "--task", "darcy", "--n-train", "6", "--n-test", "2",
        "--resolution", "16", "--seed", "3", "--out", str(again),
    ])
    assert rc == 0
    for name in ("manifest.txt", "inputs.bin", "targets.bin", "resolved_config.txt"):
        assert _read(again / name) == _read(workdir / "data16" / name)


def test_gen_data_summary_and_warning(tmp_path, capsys):
    rc = main([
        "gen-data", "--task", "darcy", "--n-train", "2", "--n-test", "1",
        "--resolution", "63", "--seed", "0", "--out", str(tmp_path / "d63"),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert "oracle residual" in out
    assert "not divisible by 4" in out


def test_gen_data_ns_step_layout(tmp_path):
    out = tmp_path / "ns"
    rc = main([
        "gen-data", "--task", "ns", "--n-train", "2", "--n-test", "1",
        "--resolution", "16", "--dt", "0.05", "--ns-mode", "step", "--out", str(out),
    ])
    assert rc == 0
    inputs = read_tensor(out / "inputs.bin")
    targets = read_tensor(out / "targets.bin")
    assert inputs.shape == (3, 3, 16, 16)
    assert targets.shape == (3, 1, 16, 16)


def test_resolved_config_parses_back_losslessly(workdir):
    path = workdir / "run" / "resolved_config.txt"
    fields = read_kv(path)
    assert set(fields) <= set(_CONFIG_DEFAULTS)
    reloaded = _load_config(
        path,
        prefixes=("model", "train"),
        extra_keys=("run.command", "run.variant", "run.data"),
    )
    assert reloaded == fields
    # no 'auto' left anywhere: the resolved file stands on its own
    assert fields["model.in_channels"] == "1"
    assert fields["model.modes_b"] == "2,2"


def test_retrain_from_resolved_config_reproduces_metrics(workdir, tmp_path):
    run2 = tmp_path / "run2"
    rc = main([
        "train", "--config", str(workdir / "run" / "resolved_config.txt"),
        "--data", str(workdir / "data16"), "--out", str(run2),
    ])
    assert rc == 0
    assert _read(run2 / "metrics.csv") == _read(workdir / "run" / "metrics.csv")


def test_eval_matches_superres_diagonal(workdir, tmp_path):
    ck = workdir / "run" / "checkpoints" / "epoch_00002"
    ev = tmp_path / "ev"
    rc = main(["eval", "--checkpoint", str(ck), "--data", str(workdir / "data16"),
               "--out", str(ev)])
    assert rc == 0
    sr = tmp_path / "sr"
    rc = main(["superres", "--checkpoints", str(ck),
               "--datasets", str(workdir / "data16"), "--out", str(sr)])
    assert rc == 0
    eval_row = (ev / "eval.csv").read_text().splitlines()[1]
    matrix_rows = (sr / "zero_shot.csv").read_text().splitlines()[1:]
    diag = [r for r in matrix_rows if r.startswith("16,16,")]
    assert len(diag) == 1
    assert diag[0] == "16,16," + eval_row + ","


def test_superres_soft_cell_for_inadmissible_grid(workdir, tmp_path, capsys):
    bad = tmp_path / "d63"
    main(["gen-data", "--task", "darcy", "--n-train", "2", "--n-test", "1",
          "--resolution", "63", "--seed", "0", "--out", str(bad)])
    ck = workdir / "run" / "checkpoints" / "epoch_00002"
    rc = main(["superres", "--checkpoints", str(ck),
               "--datasets", str(workdir / "data16"), str(bad)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "n/a" in out


def test_eval_task_mismatch_is_data_error(workdir, tmp_path, capsys):
    ns = tmp_path / "ns"
    main(["gen-data", "--task", "ns", "--n-train", "2", "--n-test", "1",
          "--resolution", "16", "--dt", "0.05", "--out", str(ns)])
    ck = workdir / "run" / "checkpoints" / "epoch_00002"
    rc = main(["eval", "--checkpoint", str(ck), "--data", str(ns)])
    assert rc == 3
    assert "trained on darcy" in capsys.readouterr().err


def test_unknown_config_key_exits_2(workdir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.widht = 8\n")
    rc = main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "model.widht" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_key_from_wrong_section_exits_2(workdir, tmp_path, capsys):
    cfg = tmp_path / "wrong.cfg"
    cfg.write_text("data.task = darcy\n")
    rc = main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "not used by this command" in capsys.readouterr().err


def test_missing_dataset_exits_3(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "x")])
    assert rc == 3
    assert "manifest" in capsys.readouterr().err


def test_missing_config_file_exits_2(workdir, tmp_path):
    rc = main(["train", "--config", str(tmp_path / "nope.cfg"),
               "--data", str(workdir / "data16"), "--out", str(tmp_path / "x")])
    assert rc == 2


def test_divergent_training_exits_4(workdir, tmp_path, capsys):
    cfg = tmp_path / "diverge.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 1\ntrain.batch_size = 3\ntrain.lr = 1e20\n"
    )
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
                   "--out", str(tmp_path / "x")])
    assert rc == 4
    assert "non-finite loss" in capsys.readouterr().err


def test_serial_variant_logged_and_wired(workdir, tmp_path):
    run = tmp_path / "serial"
    cfg = tmp_path / "s.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 0\ntrain.batch_size = 3\n"
    )
    rc = main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
               "--out", str(run), "--variant", "serial"])
    assert rc == 0
    assert read_kv(run / "resolved_config.txt")["run.variant"] == "serial"
    ck = checkpoint_load(run / "checkpoints" / "epoch_00000")
    assert ck.variant == "serial"
    assert any(".w2." in name for name in ck.params)


def test_resume_flag_continues_training(workdir, tmp_path):
    out = tmp_path / "resume"
    cfg = tmp_path / "r.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 1\ntrain.batch_size = 3\n"
    )
    assert main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
                 "--out", str(out)]) == 0
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 2\ntrain.batch_size = 3\n"
    )
    assert main(["train", "--config", str(cfg), "--data", str(workdir / "data16"),
                 "--out", str(out), "--resume"]) == 0
    # identical config and seeds: the resumed run lands on the fixture's bytes
    assert _read(out / "metrics.csv") == _read(workdir / "run" / "metrics.csv")


def test_spectrum_writes_report(workdir, tmp_path, capsys):
    out = tmp_path / "sp"
    rc = main(["spectrum", "--data", str(workdir / "data16"), "--out", str(out)])
    assert rc == 0
    assert "dominance" in capsys.readouterr().out
    logmag = read_tensor(out / "spectrum_logmag.bin")
    assert logmag.shape == (8, 16, 16)
    assert (out / "spectrum.txt").exists()


def test_spectrum_on_predictions(workdir, capsys):
    ck = workdir / "run" / "checkpoints" / "epoch_00002"
    rc = main(["spectrum", "--data", str(workdir / "data16"), "--checkpoint", str(ck)])
    assert rc == 0
    assert "predictions on 2 test samples" in capsys.readouterr().out


def test_ablate_writes_table(workdir, tmp_path, capsys):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n"
        "train.epochs = 1\ntrain.batch_size = 3\n"
    )
    out = tmp_path / "ab"
    rc = main(["ablate", "--config", str(cfg), "--data", str(workdir / "data16"),
               "--seeds", "2", "--out", str(out)])
    assert rc == 0
    assert "mse ratio" in capsys.readouterr().out
    header = (out / "ablation.csv").read_text().splitlines()[0]
    assert header.startswith("seed,")
    assert read_kv(out / "resolved_config.txt")["run.seeds"] == "2"


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
