"""Protocol-layer tests: cross-resolution matrix, ablation, spectral reports."""

import os

import numpy as np
import pytest

from dpno.datagen import GRFSpec, darcy_coefficient, darcy_solve_fd, dataset_build, grf_sample
from dpno.errors import ConfigError
from dpno.model import DPNOConfig, model_init
from dpno.protocols import (
    ablation_run,
    band_mask,
    mode_coverage_report,
    spectrum_report,
    zero_shot_eval,
)
from dpno.training import TrainConfig, checkpoint_load, latest_checkpoint, train_run


def small_config(seed=0):
    return DPNOConfig(
        in_channels=1,
        out_channels=1,
        width=8,
        levels=1,
        blocks_per_level=1,
        modes_a=(4, 4),
        seed=seed,
    )


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run16")
    data = dataset_build("darcy", 6, 2, 16, seed=0)
    tc = TrainConfig(epochs=2, batch_size=3, seed=1)
    state = train_run(small_config(), data, tc, out_dir=out)
    return out, data, state


# ---------------------------------------------------------------------------
# zero-shot matrix


def test_zero_shot_diagonal_matches_native_eval(trained):
    out, data, state = trained
    zs = zero_shot_eval([latest_checkpoint(out)], [data])
    cell = zs.cells[(16, 16)]
    assert cell["mse"] == state.records[-1].test_mse
    assert cell["rel_l2"] == state.records[-1].test_rel_l2


def test_zero_shot_cross_resolution_cells(trained, tmp_path):
    out, data, _ = trained
    ds32 = dataset_build("darcy", 3, 2, 32, seed=50)
    zs = zero_shot_eval([latest_checkpoint(out)], {16: data, 32: ds32}, out_dir=tmp_path)
    assert set(zs.cells) == {(16, 16), (16, 32)}
    for cell in zs.cells.values():
        assert np.isfinite(cell["rel_l2"])
    assert (tmp_path / "zero_shot.txt").is_file()
    assert (tmp_path / "zero_shot.csv").is_file()
    body = (tmp_path / "zero_shot.csv").read_text()
    assert body.splitlines()[0] == "train_resolution,test_resolution,mse,rel_l2,error"


def test_zero_shot_inadmissible_cell_is_soft(trained):
    out, data, _ = trained
    tiny = dataset_build("darcy", 2, 1, 8, seed=2)
    zs = zero_shot_eval([latest_checkpoint(out)], [tiny, data])
    assert "error" in zs.cells[(16, 8)]
    assert "rel_l2" in zs.cells[(16, 16)]
    assert "n/a" in zs.render()


def test_zero_shot_task_mismatch_cell(trained):
    out, data, _ = trained
    ns = dataset_build("ns", 2, 1, 16, seed=0, dt=0.05)
    zs = zero_shot_eval([latest_checkpoint(out)], [ns])
    assert "error" in zs.cells[(16, 16)]


def test_zero_shot_accepts_loaded_checkpoint(trained):
    out, data, state = trained
    ck = checkpoint_load(latest_checkpoint(out))
    zs = zero_shot_eval([ck], [data])
    assert zs.cells[(16, 16)]["rel_l2"] == state.records[-1].test_rel_l2


def test_zero_shot_needs_inputs(trained):
    out, data, _ = trained
    with pytest.raises(ConfigError):
        zero_shot_eval([], [data])
    with pytest.raises(ConfigError):
        zero_shot_eval([latest_checkpoint(out)], [])


# ---------------------------------------------------------------------------
# ablation


def test_ablation_pairs_and_ratio(tmp_path):
    data = dataset_build("darcy", 6, 2, 16, seed=0)
    tc = TrainConfig(epochs=1, batch_size=3)
    res = ablation_run(data, small_config(), tc, seeds=(0, 1), out_dir=tmp_path)
    assert len(res.runs) == 2
    # one digest per seed: the two variants of a seed share it by construction
    assert res.runs[0].data_order_digest != res.runs[1].data_order_digest
    assert all(len(r.data_order_digest) == 64 for r in res.runs)
    for r in res.runs:
        for v in (r.parallel_mse, r.serial_mse, r.parallel_rel_l2, r.serial_rel_l2):
            assert np.isfinite(v)
    assert res.mse_ratio == pytest.approx(res.mean_parallel_mse / res.mean_serial_mse)
    assert (tmp_path / "ablation.txt").is_file()
    assert (tmp_path / "ablation.csv").is_file()
    assert "ratio" in res.render()


def test_ablation_deterministic():
    data = dataset_build("darcy", 4, 2, 16, seed=3)
    tc = TrainConfig(epochs=1, batch_size=2)
    a = ablation_run(data, small_config(), tc, seeds=(5,))
    b = ablation_run(data, small_config(), tc, seeds=(5,))
    assert a.runs[0].parallel_mse == b.runs[0].parallel_mse
    assert a.runs[0].serial_mse == b.runs[0].serial_mse


def test_ablation_variants_actually_differ():
    data = dataset_build("darcy", 4, 2, 16, seed=3)
    tc = TrainConfig(epochs=1, batch_size=2)
    res = ablation_run(data, small_config(), tc, seeds=(0,))
    assert res.runs[0].parallel_mse != res.runs[0].serial_mse


def test_ablation_requires_seeds():
    data = dataset_build("darcy", 4, 2, 16, seed=3)
    with pytest.raises(ConfigError):
        ablation_run(data, small_config(), TrainConfig(epochs=1, batch_size=2), seeds=())


# ---------------------------------------------------------------------------
# spectrum report


def test_spectrum_constant_field_dominance_one():
    rep = spectrum_report(np.ones((1, 32, 32)))
    assert rep.mean_dominance == 1.0


def test_spectrum_white_noise_dominance():
    rng = np.random.default_rng(0)
    rep = spectrum_report(rng.standard_normal((20, 64, 64)))
    expected = np.pi * (64 / 8) ** 2 / 64**2
    assert abs(rep.mean_dominance / expected - 1.0) < 0.20


def test_spectrum_darcy_solutions_low_frequency(tmp_path):
    fields = np.stack(
        [
            darcy_solve_fd(darcy_coefficient(grf_sample(GRFSpec(resolution=64, seed=s))))
            for s in range(3)
        ]
    )
    rep = spectrum_report(fields, out_dir=tmp_path)
    assert (rep.dominance > 0.9).all()
    assert (tmp_path / "spectrum_logmag.bin").is_file()
    assert "mean" in (tmp_path / "spectrum.txt").read_text()


def test_spectrum_single_field_promoted():
    rep = spectrum_report(np.ones((16, 16)))
    assert rep.dominance.shape == (1,)
    assert rep.logmag.shape == (1, 16, 16)


def test_spectrum_rejects_non_square():
    with pytest.raises(ConfigError):
        spectrum_report(np.ones((4, 16, 8)))


# ---------------------------------------------------------------------------
# mode coverage


def test_mode_coverage_counts_and_union():
    cfg = DPNOConfig(
        in_channels=1, out_channels=1, width=8, levels=2, blocks_per_level=2, modes_a=(16, 16)
    )
    rep = mode_coverage_report(model_init(cfg), grid=(64, 64))
    top = rep.entries[0]
    assert top["count_a"] == 2 * 16 * 16
    assert (top["mask_union"] == top["mask_a"]).all()  # B subset of A under defaults
    for e in rep.entries:
        shared = (e["mask_b"] & ~e["mask_a"]).sum()
        assert e["count_union"] == e["count_a"] + int(shared)


def test_mode_coverage_serial_variant_identical():
    cfg = DPNOConfig(in_channels=1, out_channels=1, width=8, levels=1, blocks_per_level=1, modes_a=(8, 8))
    par = mode_coverage_report(model_init(cfg, variant="parallel"), grid=(32, 32))
    ser = mode_coverage_report(model_init(cfg, variant="serial"), grid=(32, 32))
    for a, b in zip(par.entries, ser.entries):
        np.testing.assert_array_equal(a["mask_union"], b["mask_union"])


def test_mode_coverage_writes_masks(tmp_path):
    cfg = DPNOConfig(in_channels=1, out_channels=1, width=8, levels=1, blocks_per_level=1, modes_a=(4, 4))
    mode_coverage_report(model_init(cfg), grid=(16, 16), out_dir=tmp_path)
    assert (tmp_path / "level0_block0_a.bin").is_file()
    assert (tmp_path / "level1_block0_union.bin").is_file()
    assert "level 0 block 0" in (tmp_path / "coverage.txt").read_text()


def test_band_mask_disjoint_union_identity():
    a = band_mask(64, 64, 8, 8)
    extra = np.zeros_like(a)
    extra[20:24, :4] = True  # rows far from both corner bands
    assert not (a & extra).any()
    union = a | extra
    assert union.sum() == a.sum() + extra.sum()
    assert union.sum() > a.sum()


def test_band_mask_inadmissible():
    with pytest.raises(ConfigError):
        band_mask(16, 16, 9, 4)
    with pytest.raises(ConfigError):
        band_mask(16, 16, 4, 9)
