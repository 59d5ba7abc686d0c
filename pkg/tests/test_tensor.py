"""Transform correctness: oracle agreement, inverse, Parseval, adjoints."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpno.errors import ConfigError
from dpno.tensor import (
    GridMeta,
    dft2_reference,
    fft2_forward,
    fft2_inverse,
    irfft2_adjoint,
    rfft2_adjoint,
    spectral_energy_fraction,
    spectral_resize,
    spectrum_logmag,
)


def rand_field(rng, h, w):
    return rng.standard_normal((h, w))


def test_constant_field_dc_only():
    c = 2.75
    x = np.full((4, 4), c)
    spec = fft2_forward(x)
    assert abs(spec[0, 0] - 16 * c) < 1e-12
    rest = spec.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-12


def test_delta_flat_spectrum():
    x = np.zeros((4, 4))
    x[0, 0] = 1.0
    spec = fft2_forward(x)
    assert np.max(np.abs(spec - 1.0)) < 1e-12


def test_forward_matches_dft_reference_6x6():
    rng = np.random.default_rng(0)
    x = rand_field(rng, 6, 6)
    full = dft2_reference(x)
    half = fft2_forward(x)
    assert np.max(np.abs(full[:, : 6 // 2 + 1] - half)) < 1e-10


@pytest.mark.parametrize("h", range(2, 9))
@pytest.mark.parametrize("w", range(2, 9))
def test_oracle_equivalence_all_small_sizes(h, w):
    rng = np.random.default_rng(h * 100 + w)
    x = rand_field(rng, h, w)
    full = dft2_reference(x)
    half = fft2_forward(x)
    assert np.max(np.abs(full[:, : w // 2 + 1] - half)) < 1e-10


def test_dft_reference_conjugate_symmetry_cross_check():
    rng = np.random.default_rng(3)
    x = rand_field(rng, 5, 5)
    full = dft2_reference(x)
    assert np.max(np.abs(full[:, :3] - fft2_forward(x))) < 1e-10


def test_dft_reference_trivial_cases():
    assert dft2_reference(np.array([[3.5]]))[0, 0] == pytest.approx(3.5)
    c = -1.25
    full = dft2_reference(np.full((2, 2), c))
    assert full[0, 0] == pytest.approx(4 * c)
    full[0, 0] = 0
    assert np.max(np.abs(full)) < 1e-12


def test_inverse_dc_only_constant():
    spec = np.zeros((4, 3), dtype=np.complex128)
    spec[0, 0] = 16.0
    x = fft2_inverse(spec, 4)
    assert np.max(np.abs(x - 1.0)) < 1e-12


def test_inverse_single_mode_hand_value():
    # X[1,0] = 8 with its conjugate row partner X[3,0] = 8 set explicitly
    spec = np.zeros((4, 3), dtype=np.complex128)
    spec[1, 0] = 8.0
    spec[3, 0] = 8.0
    x = fft2_inverse(spec, 4)
    i = np.arange(4)
    expected = np.cos(2 * np.pi * i / 4) * (8 * 2 / 16)
    assert np.max(np.abs(x - expected[:, None])) < 1e-12


def test_inverse_rejects_mismatched_width():
    spec = np.zeros((4, 3), dtype=np.complex128)
    with pytest.raises(ConfigError):
        fft2_inverse(spec, 6)


def test_forward_rejects_1d():
    with pytest.raises(ConfigError):
        fft2_forward(np.ones(8))


@pytest.mark.parametrize("h", [4, 6, 8, 16])
@pytest.mark.parametrize("w", [4, 6, 8, 16])
def test_round_trip(h, w):
    rng = np.random.default_rng(h + w)
    x = rand_field(rng, h, w)
    back = fft2_inverse(fft2_forward(x), w)
    assert np.max(np.abs(back - x)) < 1e-10


def test_batched_round_trip():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((3, 2, 8, 6))
    back = fft2_inverse(fft2_forward(x), 6)
    assert np.max(np.abs(back - x)) < 1e-10


@pytest.mark.parametrize("h,w", [(4, 4), (6, 8), (8, 5), (16, 16)])
def test_parseval(h, w):
    rng = np.random.default_rng(h * w)
    x = rand_field(rng, h, w)
    full = np.fft.fft2(x)
    lhs = np.sum(x * x)
    rhs = np.sum(np.abs(full) ** 2) / (h * w)
    assert abs(lhs - rhs) < 1e-9
    # same identity reconstructed from the half-spectrum storage
    half = fft2_forward(x)
    weights = np.full(w // 2 + 1, 2.0)
    weights[0] = 1.0
    if w % 2 == 0:
        weights[-1] = 1.0
    rhs_half = np.sum(weights * np.abs(half) ** 2) / (h * w)
    assert abs(lhs - rhs_half) < 1e-9


@given(
    st.integers(min_value=2, max_value=8),
    st.integers(min_value=2, max_value=8),
    st.floats(min_value=-3, max_value=3, allow_nan=False),
    st.floats(min_value=-3, max_value=3, allow_nan=False),
    st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=40, deadline=None)
def test_linearity(h, w, a, b, seed):
    rng = np.random.default_rng(seed)
    x = rand_field(rng, h, w)
    y = rand_field(rng, h, w)
    lhs = fft2_forward(a * x + b * y)
    rhs = a * fft2_forward(x) + b * fft2_forward(y)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_spectrum_logmag_constant():
    out = spectrum_logmag(np.ones((8, 8)))
    assert out[4, 4] == pytest.approx(np.log(1 + 64.0))
    out[4, 4] = 0
    assert np.max(np.abs(out)) < 1e-12


def test_spectrum_logmag_single_mode():
    n = 16
    rows = np.arange(n) / n
    x = np.sin(2 * np.pi * rows)[:, None] * np.ones((1, n))
    out = spectrum_logmag(x)
    nz = np.argwhere(out > 1e-9)
    assert len(nz) == 2
    # one mode above and one below the centered DC row
    assert {tuple(p) for p in nz} == {(n // 2 - 1, n // 2), (n // 2 + 1, n // 2)}


def test_spectral_energy_fraction_constant():
    assert spectral_energy_fraction(np.ones((16, 16)) * 3.0, 2.0) == pytest.approx(1.0)


def test_spectral_resize_band_limited_exact():
    rng = np.random.default_rng(5)
    h = w = 32
    spec = np.zeros((h, w // 2 + 1), dtype=np.complex128)
    spec[:4, :4] = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    spec[-4:, :4] = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    x = fft2_inverse(spec, w)  # real field, spectrum confined to low modes
    up = spectral_resize(x, 64, 64)
    down = spectral_resize(up, 32, 32)
    assert np.max(np.abs(down - x)) < 1e-10


def test_grid_meta_validates():
    GridMeta(8, 8)
    with pytest.raises(ConfigError):
        GridMeta(3, 8)


# adjoint identities: <A x, y> == <x, A* y> over random probes, all parities


@pytest.mark.parametrize("h,w", [(2, 2), (3, 3), (4, 4), (3, 4), (4, 3), (5, 6), (6, 5), (8, 8)])
def test_rfft2_adjoint_identity(h, w):
    rng = np.random.default_rng(h * 10 + w)
    for _ in range(5):
        x = rng.standard_normal((h, w))
        g = rng.standard_normal((h, w // 2 + 1)) + 1j * rng.standard_normal((h, w // 2 + 1))
        ax = fft2_forward(x)
        lhs = np.sum(ax.real * g.real + ax.imag * g.imag)
        rhs = np.sum(x * rfft2_adjoint(g, w))
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))


@pytest.mark.parametrize("h,w", [(2, 2), (3, 3), (4, 4), (3, 4), (4, 3), (5, 6), (6, 5), (8, 8)])
def test_irfft2_adjoint_identity(h, w):
    rng = np.random.default_rng(h * 10 + w + 99)
    for _ in range(5):
        s = rng.standard_normal((h, w // 2 + 1)) + 1j * rng.standard_normal((h, w // 2 + 1))
        y = rng.standard_normal((h, w))
        ay = fft2_inverse(s, w)
        lhs = np.sum(ay * y)
        g = irfft2_adjoint(y)
        rhs = np.sum(s.real * g.real + s.imag * g.imag)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))
