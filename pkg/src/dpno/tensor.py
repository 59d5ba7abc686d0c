"""Dense field arrays and 2-D Fourier transforms.

Values are plain numpy arrays: float64 for physical fields ("Tensor"),
complex128 for spectra and spectral weights ("ComplexTensor"), contiguous
row-major throughout. The transform convention is fixed here once and used
everywhere: forward unnormalized, inverse carries the 1/(H*W) factor, real
input stored as a half-spectrum of W//2+1 columns.

Besides the transforms this module holds their adjoints as real-linear maps
(the differentiation engine needs them) and spectrum utilities for the
frequency-distribution reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from .errors import ConfigError


@dataclass(frozen=True)
class GridMeta:
    """Discretization of the physical domain carried alongside field data."""

    height: int
    width: int
    domain: tuple[float, float] = (1.0, 1.0)
    periodic: tuple[bool, bool] = (False, False)

    def __post_init__(self):
        if self.height < 4 or self.width < 4:
            raise ConfigError(f"grid must be at least 4x4, got {self.height}x{self.width}")


def as_field(x) -> np.ndarray:
    """Coerce to a contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


def as_spectrum(x) -> np.ndarray:
    """Coerce to a contiguous complex128 array."""
    return np.ascontiguousarray(x, dtype=np.complex128)


def fft2_forward(field: np.ndarray) -> np.ndarray:
    """Unnormalized real-input FFT over the last two axes.

    Returns the half-spectrum [..., H, W//2+1]; the redundant conjugate
    columns implied by a real input are not stored. X[..., 0, 0] equals the
    plain sum of the field.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim < 2:
        raise ConfigError(f"fft2_forward needs at least 2 axes, got shape {field.shape}")
    h, w = field.shape[-2:]
    if h < 2 or w < 2:
        raise ConfigError(f"spatial extents must be >= 2, got {h}x{w}")
    return _fft.rfft2(field, axes=(-2, -1))


def fft2_inverse(spec: np.ndarray, width: int) -> np.ndarray:
    """Inverse of fft2_forward, scaled by 1/(H*W).

    `width` disambiguates the even/odd full width behind a half-spectrum;
    a mismatched value is rejected rather than silently reinterpreted.
    """
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim < 2:
        raise ConfigError(f"fft2_inverse needs at least 2 axes, got shape {spec.shape}")
    if spec.shape[-1] != width // 2 + 1:
        raise ConfigError(
            f"half-spectrum has {spec.shape[-1]} columns, expected {width // 2 + 1} for width {width}"
        )
    h = spec.shape[-2]
    return _fft.irfft2(spec, s=(h, width), axes=(-2, -1))


def dft2_reference(field: np.ndarray) -> np.ndarray:
    """Brute-force double-sum DFT, full spectrum, forward convention.

    Independent oracle for fft2_forward: O(N^4), no FFT machinery, usable
    only on small grids. Kept deliberately literal.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ConfigError(f"dft2_reference expects a 2-D field, got shape {field.shape}")
    h, w = field.shape
    out = np.empty((h, w), dtype=np.complex128)
    n1 = np.arange(h)
    n2 = np.arange(w)
    for k1 in range(h):
        for k2 in range(w):
            phase = np.exp(-2j * np.pi * (k1 * n1[:, None] / h + k2 * n2[None, :] / w))
            out[k1, k2] = np.sum(field * phase)
    return out


def spectrum_logmag(field: np.ndarray) -> np.ndarray:
    """Center-shifted log(1+|X|) of the full spectrum, DC at (H//2, W//2)."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ConfigError(f"spectrum_logmag expects a 2-D field, got shape {field.shape}")
    h, w = field.shape
    if h < 4 or w < 4:
        raise ConfigError(f"spectrum_logmag needs at least 4x4, got {h}x{w}")
    mag = np.abs(_fft.fft2(field))
    return np.fft.fftshift(np.log1p(mag))


def spectral_energy_fraction(field: np.ndarray, radius: float) -> float:
    """Fraction of total squared spectral magnitude within `radius` of DC.

    Frequencies are the signed integer mode numbers; the disk includes DC.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    power = np.abs(_fft.fft2(field)) ** 2
    k1 = np.fft.fftfreq(h, d=1.0 / h)
    k2 = np.fft.fftfreq(w, d=1.0 / w)
    dist2 = k1[:, None] ** 2 + k2[None, :] ** 2
    total = power.sum()
    if total == 0.0:
        return 1.0
    return float(power[dist2 <= radius * radius].sum() / total)


def spectral_resize(field: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Resample trailing spatial axes by zero-padding / cropping the spectrum.

    Exact on band-limited inputs whose energy sits strictly inside the
    shared mode box; amplitudes rescale by (new_h*new_w)/(H*W) so function
    values are preserved.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape[-2:]
    spec = _fft.rfft2(field, axes=(-2, -1))
    out = np.zeros(field.shape[:-2] + (new_h, new_w // 2 + 1), dtype=np.complex128)
    kh = min(h, new_h) // 2
    kw = min(w // 2 + 1, new_w // 2 + 1)
    out[..., :kh, :kw] = spec[..., :kh, :kw]
    out[..., -kh:, :kw] = spec[..., h - kh :, :kw]
    out *= (new_h * new_w) / (h * w)
    return _fft.irfft2(out, s=(new_h, new_w), axes=(-2, -1))


# ---------------------------------------------------------------------------
# Adjoints of the real-input transforms, viewed as real-linear maps
# R^{H*W} <-> R^{2*H*(W//2+1)}. Derived by transposing the half-spectrum
# storage: interior columns of the half-spectrum stand for two conjugate
# entries of the full spectrum, edge columns (0 and, for even W, W/2) for one.
# Gradients of complex arrays follow the d/dRe + i*d/dIm convention.
# ---------------------------------------------------------------------------


def rfft2_adjoint(gspec: np.ndarray, width: int) -> np.ndarray:
    """Adjoint of fft2_forward: C^{H x (W//2+1)} (as reals) -> R^{H x W}."""
    gspec = np.asarray(gspec, dtype=np.complex128)
    h = gspec.shape[-2]
    g = gspec.copy()
    # edge columns represent one full-spectrum entry each; fold in the
    # conjugate row symmetry the half-spectrum storage removed
    edge_cols = (0, width // 2) if width % 2 == 0 else (0,)
    for c in edge_cols:
        col = g[..., :, c]
        rev = np.roll(col[..., ::-1], 1, axis=-1)  # row k1 -> (h - k1) % h
        g[..., :, c] = 0.5 * (col + np.conj(rev))
    g[..., :, 1 : (width + 1) // 2] *= 0.5  # interior columns stand for two entries
    return h * width * _fft.irfft2(g, s=(h, width), axes=(-2, -1))


def irfft2_adjoint(gfield: np.ndarray) -> np.ndarray:
    """Adjoint of irfft2 (the map fft2_inverse): R^{H x W} -> C^{H x (W//2+1)}."""
    gfield = np.asarray(gfield, dtype=np.float64)
    h, w = gfield.shape[-2:]
    g = _fft.rfft2(gfield, axes=(-2, -1))
    g *= 2.0 / (h * w)
    g[..., :, 0] *= 0.5
    if w % 2 == 0:
        g[..., :, -1] *= 0.5
    return g
