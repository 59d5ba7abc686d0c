"""Evaluate one set of weights on grids it was never trained on.

A spectral branch acts on a fixed set of retained Fourier modes, so its
parameters mean the same thing on any grid large enough to carry those
modes. On band-limited input the transfer is exact to rounding. A full
trained model is then scored on a finer grid without retraining. Run
demos/03 first to reuse its checkpoint, otherwise this script trains a
fresh copy into demo03_out.
"""

import os

import numpy as np

from dpno import (
    DPNOConfig,
    TrainConfig,
    dataset_build,
    train_run,
    zero_shot_eval,
)
from dpno.errors import ConfigError
from dpno.layers import ParamTensor, SpectralConvLayer
from dpno.model import ParallelOperatorBlock, parallel_block_forward
from dpno.tensor import fft2_inverse, spectral_resize

CKPT = "demo03_out/checkpoints/epoch_00030"


def pure_block_transfer():
    rng = np.random.default_rng(8)
    a = SpectralConvLayer.init(1, 1, 4, 4, rng, "a")
    b = SpectralConvLayer.init(1, 1, 2, 2, rng, "b")
    blk = ParallelOperatorBlock(a, b, ParamTensor(np.zeros((1, 1)), "w"),
                                ParamTensor(np.zeros(1), "c"), activate=False)

    # input with spectral support inside the wider branch band
    spec = np.zeros((1, 1, 32, 17), dtype=np.complex128)
    spec[0, 0, :4, :4] = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    spec[0, 0, 29:, :4] = rng.standard_normal((3, 4))
    coarse = fft2_inverse(spec, 32)

    up_then_apply = parallel_block_forward(spectral_resize(coarse, 64, 64), blk)
    apply_then_up = spectral_resize(parallel_block_forward(coarse, blk), 64, 64)
    gap = np.max(np.abs(up_then_apply - apply_then_up))
    print(f"pure block, 32x32 vs 64x64 on band-limited input: max |diff| = {gap:.2e}")


def trained_model_transfer():
    ds32 = dataset_build("darcy", n_train=64, n_test=16, resolution=32, seed=5)
    if not os.path.isdir(CKPT):
        mc = DPNOConfig(in_channels=1, out_channels=1, width=16, levels=2,
                        blocks_per_level=2, modes_a=(8, 8), modes_b=(4, 4))
        train_run(mc, ds32, TrainConfig(epochs=30, batch_size=16, eval_every=5),
                  out_dir="demo03_out")
    ds64 = dataset_build("darcy", n_train=1, n_test=16, resolution=64, seed=11)

    result = zero_shot_eval([CKPT], [ds32, ds64])
    print("\ntrained at 32, evaluated zero-shot:")
    for res in result.test_resolutions:
        rel = result.cells[(32, res)]["rel_l2"]
        print(f"  {res}x{res}: relative L2 = {rel:.4f}")
    print("finer-grid error is higher but the same weights transfer untouched")


def admissibility():
    from dpno.model import apply_at_resolution
    from dpno.training import checkpoint_load

    ck = checkpoint_load(CKPT)
    try:
        apply_at_resolution(ck.build_model(), np.zeros((1, 1, 63, 63)))
    except ConfigError as exc:
        print(f"\n63x63 is rejected up front: {exc}")


def main():
    pure_block_transfer()
    trained_model_transfer()
    admissibility()


if __name__ == "__main__":
    main()
