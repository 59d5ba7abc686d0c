"""Model assembly: census, determinism, gradients, mode coverage, resolution."""

import numpy as np
import pytest

from dpno.errors import ConfigError
from dpno.gradcheck import grad_check
from dpno.layers import ParamTensor, SpectralConvLayer, mse_loss
from dpno.model import (
    DPNOConfig,
    DPNOModel,
    ParallelOperatorBlock,
    apply_at_resolution,
    dpno_forward,
    model_init,
    parallel_block_forward,
    parameter_counts,
    serial_block_forward,
)
from dpno.tensor import fft2_forward, fft2_inverse, spectral_resize

SMALL = DPNOConfig(in_channels=3, out_channels=1, width=8, levels=1, blocks_per_level=1,
                   modes_a=(4, 4), modes_b=(2, 2), seed=11)


def identity_block(c=1, m_a=(2, 2), m_b=(1, 1), activate=False, serial=False):
    rng = np.random.default_rng(0)
    a = SpectralConvLayer.init(c, c, *m_a, rng, "a")
    b = SpectralConvLayer.init(c, c, *m_b, rng, "b")
    a.weights.value[...] = 0
    b.weights.value[...] = 0
    w = ParamTensor(np.eye(c), "w")
    bias = ParamTensor(np.zeros(c), "bias")
    w2 = ParamTensor(np.eye(c), "w2") if serial else None
    b2 = ParamTensor(np.zeros(c), "b2") if serial else None
    return ParallelOperatorBlock(a, b, w, bias, activate, w2, b2)


def test_parameter_census_hand_count():
    # width 8, levels 1, 1 block/level, modes (4,4)/(2,2), in 3, out 1:
    # lift 104, enc conv 584, two block stacks 5192 each, dec conv 584,
    # project 161 -> 11817 reals (complex weights count twice)
    assert parameter_counts(SMALL)["parallel"] == 11817
    model = model_init(SMALL)
    assert model.param_count == 11817


def test_serial_counts_add_second_pointwise():
    counts = parameter_counts(SMALL)
    # one extra (8x8 + 8) pointwise map per block, 2 blocks total
    assert counts["serial"] - counts["parallel"] == 2 * (64 + 8)
    assert model_init(SMALL, "serial").param_count == counts["serial"]


def test_same_seed_bit_identical_params():
    m1 = model_init(SMALL)
    m2 = model_init(SMALL)
    for p, q in zip(m1.params, m2.params):
        assert p.name == q.name
        np.testing.assert_array_equal(p.value, q.value)


def test_modes_b_default_is_half():
    cfg = DPNOConfig(in_channels=1, out_channels=1, width=4, modes_a=(16, 16))
    assert cfg.modes_b == (8, 8)


def test_invalid_modes_rejected():
    with pytest.raises(ConfigError):
        DPNOConfig(in_channels=1, out_channels=1, width=4, modes_a=(4, 4), modes_b=(4, 4))
    with pytest.raises(ConfigError):
        DPNOConfig(in_channels=1, out_channels=1, width=4, modes_a=(4, 4), modes_b=(5, 2))


def test_width_must_cover_channels():
    with pytest.raises(ConfigError):
        DPNOConfig(in_channels=8, out_channels=1, width=4)


def test_mode_schedule_halves_with_floors():
    cfg = DPNOConfig(in_channels=1, out_channels=1, width=4, levels=3,
                     modes_a=(16, 16), modes_b=(8, 8))
    assert [cfg.modes_at(l)[0][0] for l in range(4)] == [16, 8, 4, 4]
    assert [cfg.modes_at(l)[1][0] for l in range(4)] == [8, 4, 2, 2]


def test_forward_shape_contract():
    model = model_init(DPNOConfig(in_channels=3, out_channels=2, width=8, levels=2,
                                  blocks_per_level=1, modes_a=(4, 4), modes_b=(2, 2)))
    x = np.random.default_rng(0).standard_normal((2, 3, 64, 64))
    y = dpno_forward(x, model)
    assert y.shape == (2, 2, 64, 64)


def test_forward_deterministic_given_seed():
    x = np.random.default_rng(1).standard_normal((1, 3, 16, 16))
    y1 = dpno_forward(x, model_init(SMALL))
    y2 = dpno_forward(x, model_init(SMALL))
    np.testing.assert_array_equal(y1, y2)


def test_indivisible_grid_rejected():
    model = model_init(SMALL)
    with pytest.raises(ConfigError):
        model.apply(np.zeros((1, 3, 17, 16)))
    with pytest.raises(ConfigError):
        apply_at_resolution(model, np.zeros((1, 3, 63, 63)))


@pytest.mark.parametrize("variant", ["parallel", "serial"])
def test_end_to_end_gradcheck(variant):
    rng = np.random.default_rng(21)
    model = model_init(SMALL, variant)
    x = rng.standard_normal((1, 3, 16, 16))
    t = rng.standard_normal((1, 1, 16, 16))
    sampled = rng.choice(len(model.params), size=10, replace=False)
    tensors = [model.params[i].value for i in sampled]

    def f():
        model.zero_grads()
        y, back = model.forward(x)
        loss, lback = mse_loss(y, t)
        back(lback())
        return loss, [model.params[i].grad.copy() for i in sampled]

    assert grad_check(f, tensors, rng=rng, samples_per_tensor=4) < 1e-4


def test_input_gradient_matches_fd():
    rng = np.random.default_rng(22)
    model = model_init(SMALL)
    x = rng.standard_normal((1, 3, 16, 16))
    t = rng.standard_normal((1, 1, 16, 16))

    def f():
        model.zero_grads()
        y, back = model.forward(x)
        loss, lback = mse_loss(y, t)
        return loss, [back(lback())]

    assert grad_check(f, [x], rng=rng, samples_per_tensor=6) < 1e-4


# --- block-level behavior ---


def test_parallel_block_identity_configuration():
    blk = identity_block(c=2)
    x = np.random.default_rng(2).standard_normal((1, 2, 8, 8))
    np.testing.assert_allclose(parallel_block_forward(x, blk), x, atol=1e-14)


def test_serial_block_identity_configuration():
    # zero spectral weights, identity pointwise maps, no activation:
    # out = SC_b(gelu(W1 v)) + W2 v = W2 v = v when SC weights are zero
    blk = identity_block(c=2, serial=True)
    x = np.random.default_rng(3).standard_normal((1, 2, 8, 8))
    np.testing.assert_allclose(serial_block_forward(x, blk), x, atol=1e-14)


def test_block_high_mode_passes_only_through_w():
    rng = np.random.default_rng(4)
    c = 1
    a = SpectralConvLayer.init(c, c, 2, 2, rng, "a")
    b = SpectralConvLayer.init(c, c, 1, 1, rng, "b")
    w = ParamTensor(np.array([[1.5]]), "w")
    bias = ParamTensor(np.zeros(1), "bias")
    blk = ParallelOperatorBlock(a, b, w, bias, activate=False)
    n = 16
    cols = np.arange(n) / n
    x = np.cos(2 * np.pi * 5 * cols)[None, None, None, :] * np.ones((1, 1, n, 1))
    y = parallel_block_forward(x, blk)
    np.testing.assert_allclose(y, 1.5 * x, atol=1e-12)


def test_serial_high_mode_inside_a_outside_b_reaches_output():
    rng = np.random.default_rng(5)
    c = 1
    a = SpectralConvLayer.init(c, c, 4, 4, rng, "a")
    b = SpectralConvLayer.init(c, c, 2, 2, rng, "b")
    b.weights.value[...] = 0  # isolate the W paths
    w1 = ParamTensor(np.array([[1.0]]), "w1")
    w2 = ParamTensor(np.array([[1.0]]), "w2")
    bias = ParamTensor(np.zeros(1), "b1")
    bias2 = ParamTensor(np.zeros(1), "b2")
    blk = ParallelOperatorBlock(a, b, w1, bias, False, w2, bias2)
    n = 16
    cols = np.arange(n) / n
    x = np.cos(2 * np.pi * 3 * cols)[None, None, None, :] * np.ones((1, 1, n, 1))  # inside a, outside b
    y = serial_block_forward(x, blk)
    assert np.max(np.abs(y)) > 0.1


def probe_responsive_set(blk, n=16):
    """Modes k (half-spectrum cell) with nonzero linear spectral response."""
    responsive = set()
    base = np.zeros((1, 1, n, n // 2 + 1), dtype=np.complex128)
    for k1 in range(n):
        for k2 in range(n // 2 + 1):
            spec = base.copy()
            spec[0, 0, k1, k2] = 1.0
            if k2 in (0, n // 2):
                spec[0, 0, (n - k1) % n, k2] = np.conj(spec[0, 0, k1, k2])
            x = fft2_inverse(spec, n)
            y = parallel_block_forward(x, blk)
            out_spec = fft2_forward(y)
            if np.max(np.abs(out_spec)) > 1e-12:
                responsive.add((k1, k2))
    return responsive


def truncation_set(m1, m2, n=16):
    rows = set(range(m1)) | set(range(n - m1, n))
    return {(k1, k2) for k1 in rows for k2 in range(m2)}


def edge_mirror_closure(cells, n=16):
    """A real-field probe in column 0 or n/2 excites both conjugate rows."""
    extra = {((n - k1) % n, k2) for (k1, k2) in cells if k2 in (0, n // 2)}
    return cells | extra


def test_mode_probe_union_strictly_contains_branch_a():
    # non-nested rectangles: the union is strictly larger than either branch
    rng = np.random.default_rng(6)
    a = SpectralConvLayer.init(1, 1, 4, 2, rng, "a")
    b = SpectralConvLayer.init(1, 1, 2, 4, rng, "b")
    a.weights.value += 0.5  # keep every retained weight away from zero
    b.weights.value += 0.5
    w = ParamTensor(np.zeros((1, 1)), "w")
    bias = ParamTensor(np.zeros(1), "bias")
    blk = ParallelOperatorBlock(a, b, w, bias, activate=False)
    responsive = probe_responsive_set(blk)
    sa = truncation_set(4, 2)
    sb = truncation_set(2, 4)
    assert responsive == edge_mirror_closure(sa | sb)
    assert responsive > edge_mirror_closure(sa)
    assert responsive > edge_mirror_closure(sb)


def test_mode_probe_nested_default_equals_branch_a():
    rng = np.random.default_rng(7)
    a = SpectralConvLayer.init(1, 1, 4, 4, rng, "a")
    b = SpectralConvLayer.init(1, 1, 2, 2, rng, "b")
    a.weights.value += 0.5
    b.weights.value += 0.5
    w = ParamTensor(np.zeros((1, 1)), "w")
    bias = ParamTensor(np.zeros(1), "bias")
    blk = ParallelOperatorBlock(a, b, w, bias, activate=False)
    responsive = probe_responsive_set(blk)
    # nested rectangles: the union is exactly branch A's set
    assert responsive == edge_mirror_closure(truncation_set(4, 4))


# --- resolution behavior ---


def band_limited_field(rng, h, w, m1, m2, batch=1, channels=1):
    spec = np.zeros((batch, channels, h, w // 2 + 1), dtype=np.complex128)
    block = rng.standard_normal((batch, channels, m1, m2)) + 1j * rng.standard_normal(
        (batch, channels, m1, m2)
    )
    spec[..., :m1, :m2] = block
    spec[..., h - m1 + 1 :, :m2] = rng.standard_normal((batch, channels, m1 - 1, m2))
    return fft2_inverse(spec, w)


def test_pure_block_resolution_transfer_band_limited():
    rng = np.random.default_rng(8)
    a = SpectralConvLayer.init(1, 1, 4, 4, rng, "a")
    b = SpectralConvLayer.init(1, 1, 2, 2, rng, "b")
    w = ParamTensor(np.zeros((1, 1)), "w")
    bias = ParamTensor(np.zeros(1), "bias")
    blk = ParallelOperatorBlock(a, b, w, bias, activate=False)
    coarse = band_limited_field(rng, 32, 32, 4, 4)
    fine = spectral_resize(coarse, 64, 64)
    y_coarse = parallel_block_forward(coarse, blk)
    y_fine = parallel_block_forward(fine, blk)
    up = spectral_resize(y_coarse, 64, 64)
    assert np.max(np.abs(up - y_fine)) < 1e-8


def test_apply_at_resolution_same_weights():
    model = model_init(DPNOConfig(in_channels=1, out_channels=1, width=4, levels=2,
                                  blocks_per_level=1, modes_a=(4, 4), modes_b=(2, 2), seed=3))
    before = [p.value.copy() for p in model.params]
    x = np.random.default_rng(9).standard_normal((1, 1, 128, 128))
    y = apply_at_resolution(model, x)
    assert y.shape == (1, 1, 128, 128)
    for p, old in zip(model.params, before):
        np.testing.assert_array_equal(p.value, old)


def test_use_skip_false_still_runs():
    cfg = DPNOConfig(in_channels=1, out_channels=1, width=4, levels=1,
                     blocks_per_level=1, modes_a=(2, 2), modes_b=(1, 1), use_skip=False)
    model = model_init(cfg)
    y = model.apply(np.random.default_rng(10).standard_normal((1, 1, 8, 8)))
    assert y.shape == (1, 1, 8, 8)
