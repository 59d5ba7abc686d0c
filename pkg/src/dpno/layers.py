"""Differentiable layer primitives with hand-derived adjoints.

There is no tape: each primitive returns (output, backward) where backward
takes the output gradient, accumulates parameter gradients in place, and
returns the input gradient. Composites (the model) chain these closures by
hand. Gradients of complex arrays follow the dL/dRe + i*dL/dIm convention,
so complex parameters behave as independent real/imaginary pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError
from .tensor import irfft2_adjoint, rfft2_adjoint

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


@dataclass
class ParamTensor:
    """A named parameter with a same-shape gradient accumulator."""

    value: np.ndarray
    name: str
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros_like(self.value)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def real_view(self) -> np.ndarray:
        """Parameter as float64 storage (complex seen as real/imag pairs)."""
        return self.value.view(np.float64) if self.is_complex else self.value

    def grad_view(self) -> np.ndarray:
        return self.grad.view(np.float64) if self.is_complex else self.grad

    def compute(self, dtype) -> np.ndarray:
        """Value cast to a compute dtype; the float64 master stays authoritative.

        Mixed-precision training converts per use. Gradients computed at the
        lower precision upcast when accumulated into the float64 buffer.
        """
        if self.value.dtype == dtype:
            return self.value
        return self.value.astype(dtype)

    @property
    def size_real(self) -> int:
        return self.value.size * (2 if self.is_complex else 1)


def pointwise_linear(x: np.ndarray, weight: ParamTensor, bias: ParamTensor):
    """Per-pixel affine channel mix: y[b,o,h,w] = sum_i W[o,i] x[b,i,h,w] + c[o]."""
    b, c_in, h, w = x.shape
    wmat = weight.value
    if wmat.shape[1] != c_in or bias.value.shape != (wmat.shape[0],):
        raise ConfigError(
            f"pointwise_linear shapes: x has {c_in} channels, weight {wmat.shape}, bias {bias.value.shape}"
        )
    xr = x.reshape(b, c_in, h * w)
    y = np.matmul(wmat, xr).reshape(b, -1, h, w)
    y += bias.value[:, None, None]

    def backward(gy: np.ndarray) -> np.ndarray:
        gyr = gy.reshape(b, wmat.shape[0], h * w)
        weight.grad += np.matmul(gyr, xr.transpose(0, 2, 1)).sum(axis=0)
        bias.grad += gy.sum(axis=(0, 2, 3))
        return np.matmul(wmat.T, gyr).reshape(b, c_in, h, w)

    return y, backward


def conv3x3(x: np.ndarray, kernel: ParamTensor, bias: ParamTensor):
    """Zero-padded same-size 3x3 convolution (cross-correlation), exact adjoints."""
    b, c_in, h, w = x.shape
    k = kernel.value
    if h < 3 or w < 3:
        raise ConfigError(f"conv3x3 needs at least 3x3 spatial extents, got {h}x{w}")
    if k.shape[1] != c_in or k.shape[2:] != (3, 3) or bias.value.shape != (k.shape[0],):
        raise ConfigError(f"conv3x3 shapes: x {x.shape}, kernel {k.shape}, bias {bias.value.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    y = np.einsum("bchwuv,ocuv->bohw", win, k, optimize=True)
    y += bias.value[:, None, None]

    def backward(gy: np.ndarray) -> np.ndarray:
        kernel.grad += np.einsum("bohw,bchwuv->ocuv", gy, win, optimize=True)
        bias.grad += gy.sum(axis=(0, 2, 3))
        gyp = np.pad(gy, ((0, 0), (0, 0), (1, 1), (1, 1)))
        gwin = sliding_window_view(gyp, (3, 3), axis=(2, 3))
        # adjoint of correlation: correlate with the spatially flipped kernel,
        # contracting over output channels
        return np.einsum("bohwuv,ocuv->bchw", gwin, k[:, :, ::-1, ::-1], optimize=True)

    return y, backward


def gelu(x: np.ndarray):
    """tanh-approximation GELU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    # written as c*x*(1 + a*x^2) to keep temporaries down; this path is hot
    u = x * x
    u *= _GELU_A
    u += 1.0
    u *= x
    u *= _GELU_C
    np.tanh(u, out=u)
    t = u  # cached for the backward pass
    y = t + 1.0
    y *= x
    y *= 0.5

    def backward(gy: np.ndarray) -> np.ndarray:
        # exact derivative of the tanh approximation
        gx = x * x
        gx *= 3.0 * _GELU_A
        gx += 1.0
        gx *= x
        gx *= 0.5 * _GELU_C
        s = t * t
        np.subtract(1.0, s, out=s)
        gx *= s
        np.multiply(t, 0.5, out=s)
        gx += s
        gx += 0.5
        gx *= gy
        return gx

    return y, backward


def avgpool2(x: np.ndarray):
    """Non-overlapping 2x2 mean pooling.

    Leading two axes are passed through, so both activation layouts work.
    Phase slicing beats a reshaped-axis reduction here by about 3x.
    """
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"avgpool2 needs even spatial extents, got {h}x{w}")
    y = x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2]
    y += x[:, :, 1::2, 0::2]
    y += x[:, :, 1::2, 1::2]
    y *= 0.25

    def backward(gy: np.ndarray) -> np.ndarray:
        gx = np.empty((b, c, h, w), dtype=gy.dtype)
        q = 0.25 * gy
        gx[:, :, 0::2, 0::2] = q
        gx[:, :, 0::2, 1::2] = q
        gx[:, :, 1::2, 0::2] = q
        gx[:, :, 1::2, 1::2] = q
        return gx

    return y, backward


def upsample_nearest2(x: np.ndarray):
    """Replicate each pixel into a 2x2 block."""
    b, c, h, w = x.shape
    y = np.empty((b, c, 2 * h, 2 * w), dtype=x.dtype)
    y[:, :, 0::2, 0::2] = x
    y[:, :, 0::2, 1::2] = x
    y[:, :, 1::2, 0::2] = x
    y[:, :, 1::2, 1::2] = x

    def backward(gy: np.ndarray) -> np.ndarray:
        gx = gy[:, :, 0::2, 0::2] + gy[:, :, 0::2, 1::2]
        gx += gy[:, :, 1::2, 0::2]
        gx += gy[:, :, 1::2, 1::2]
        return gx

    return y, backward


@dataclass
class SpectralConvLayer:
    """Complex weights over a truncated mode rectangle.

    The retained rows are the m1 lowest positive and m1 lowest negative
    frequencies, so weights hold both bands stacked: shape
    (c_in, c_out, 2*m1, m2), rows 0..m1-1 for the positive band and
    m1..2*m1-1 for the negative band, columns over the half-spectrum.
    """

    weights: ParamTensor
    modes: tuple[int, int]

    def __post_init__(self):
        m1, m2 = self.modes
        if m1 < 1 or m2 < 1:
            raise ConfigError(f"mode counts must be >= 1, got {self.modes}")
        if self.weights.value.shape[2:] != (2 * m1, m2):
            raise ConfigError(
                f"spectral weights shape {self.weights.value.shape} does not match modes {self.modes}"
            )
        if not self.weights.is_complex:
            raise ConfigError("spectral weights must be complex")

    @classmethod
    def init(cls, c_in: int, c_out: int, m1: int, m2: int, rng: np.random.Generator, name: str):
        scale = 1.0 / (c_in * c_out)
        shape = (c_in, c_out, 2 * m1, m2)
        w = scale * rng.random(shape) + 1j * scale * rng.random(shape)
        return cls(ParamTensor(w, name), (m1, m2))

    def admissible(self, h: int, w: int) -> bool:
        return h >= 2 * self.modes[0] and w >= 2 * self.modes[1]


def _gather_modes(spec: np.ndarray, m1: int, m2: int) -> np.ndarray:
    """Retained modes of a half-spectrum as (2*m1, m2, C, B), contiguous."""
    h = spec.shape[-2]
    band = np.concatenate([spec[..., :m1, :m2], spec[..., h - m1 :, :m2]], axis=-2)
    return np.ascontiguousarray(band.transpose(2, 3, 1, 0))


def _scatter_modes_add(buf: np.ndarray, yk: np.ndarray, m1: int, m2: int) -> None:
    """Add (2*m1, m2, C, B) mode values into a zeroed full half-spectrum buffer."""
    h = buf.shape[-2]
    yb = yk.transpose(3, 2, 0, 1)
    buf[..., :m1, :m2] += yb[..., :m1, :]
    buf[..., h - m1 :, :m2] += yb[..., m1:, :]


# Channel-major twins. The model keeps activations as (C, B, H, W) so the
# channel contractions become single large GEMMs and the conv columns can be
# gathered with aligned streaming copies; the public (B, C, H, W) entry
# points above stay as the reference implementations.


def _pointwise_cm(x: np.ndarray, weight: ParamTensor, bias: ParamTensor):
    c_in = x.shape[0]
    wmat = weight.compute(x.dtype)
    xr = x.reshape(c_in, -1)
    y = wmat @ xr
    y += bias.compute(x.dtype)[:, None]

    def backward(gy: np.ndarray) -> np.ndarray:
        gyr = gy.reshape(wmat.shape[0], -1)
        weight.grad += gyr @ xr.T
        bias.grad += gyr.sum(axis=1)
        return (wmat.T @ gyr).reshape(x.shape)

    return y.reshape((wmat.shape[0],) + x.shape[1:]), backward


def _conv3x3_cm(x: np.ndarray, kernel: ParamTensor, bias: ParamTensor):
    c_in, b, h, w = x.shape
    k = kernel.compute(x.dtype)
    o = k.shape[0]
    xp = np.zeros((c_in, b, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    # materialized columns are kept for the kernel gradient, which then
    # costs one GEMM instead of a second windowed contraction
    cols = np.ascontiguousarray(win.transpose(0, 4, 5, 1, 2, 3))
    cm = cols.reshape(c_in * 9, b * h * w)
    kmat = k.reshape(o, c_in * 9)
    y = (kmat @ cm).reshape(o, b, h, w)
    y += bias.compute(x.dtype)[:, None, None, None]

    def backward(gy: np.ndarray) -> np.ndarray:
        gym = gy.reshape(o, b * h * w)
        kernel.grad += (gym @ cm.T).reshape(o, c_in, 3, 3)
        bias.grad += gym.sum(axis=1)
        gyp = np.zeros((o, b, h + 2, w + 2), dtype=gy.dtype)
        gyp[:, :, 1:-1, 1:-1] = gy
        gwin = sliding_window_view(gyp, (3, 3), axis=(2, 3))
        return np.einsum("obhwuv,ocuv->cbhw", gwin, k[:, :, ::-1, ::-1], optimize=True)

    return y, backward


def _gather_modes_cm(spec: np.ndarray, m1: int, m2: int) -> np.ndarray:
    """Retained modes of a (C, B, H, Wf) half-spectrum as (2*m1, m2, C, B)."""
    h = spec.shape[-2]
    band = np.concatenate([spec[..., :m1, :m2], spec[..., h - m1 :, :m2]], axis=-2)
    return np.ascontiguousarray(band.transpose(2, 3, 0, 1))


def _scatter_modes_add_cm(buf: np.ndarray, yk: np.ndarray, m1: int, m2: int) -> None:
    h = buf.shape[-2]
    yb = yk.transpose(2, 3, 0, 1)
    buf[..., :m1, :m2] += yb[..., :m1, :]
    buf[..., h - m1 :, :m2] += yb[..., m1:, :]


def _branch_backward_cm(graw, xk, layer, gbuf, h: int, w: int) -> None:
    """One spectral branch of a backward pass, on gathered-size arrays.

    graw is the plain rfft2 of the output gradient; the transform-adjoint
    scalings (2/(h*w) and column-0 halving on the way in, h*w and interior
    column halving on the way out) commute with the channel contraction, so
    they are applied to the small mode blocks instead of the full spectrum.
    Only the column-0 conjugate fold must wait for the scattered buffer,
    because its row mirror crosses the retained band edge.
    """
    m1, m2 = layer.modes
    gk = _gather_modes_cm(graw, m1, m2)
    gk *= 2.0 / (h * w)
    gk[:, 0] *= 0.5
    gxk = _contract_backward(xk, gk, layer)
    gxk *= float(h * w)
    gxk[:, 1:] *= 0.5
    _scatter_modes_add_cm(gbuf, gxk, m1, m2)


def _fold_col0(buf: np.ndarray) -> None:
    """Column-0 part of the rfft2 adjoint fold, in place on a half-spectrum."""
    col = buf[..., :, 0]
    rev = np.roll(col[..., ::-1], 1, axis=-1)
    buf[..., :, 0] = 0.5 * (col + np.conj(rev))


def _spectral_conv_cm(x: np.ndarray, layer: SpectralConvLayer):
    """spectral_conv on (C, B, H, W) activations, same math."""
    c_in, b, h, w = x.shape
    m1, m2 = layer.modes
    if not layer.admissible(h, w):
        raise ConfigError(f"grid {h}x{w} too small for modes {layer.modes}")
    if layer.weights.value.shape[0] != c_in:
        raise ConfigError(
            f"spectral layer expects {layer.weights.value.shape[0]} channels, got {c_in}"
        )
    c_out = layer.weights.value.shape[1]
    spec = _fft.rfft2(x, axes=(-2, -1))
    xk = _gather_modes_cm(spec, m1, m2)
    yk = _contract_forward(xk, layer)
    buf = np.zeros((c_out, b, h, w // 2 + 1), dtype=spec.dtype)
    _scatter_modes_add_cm(buf, yk, m1, m2)
    y = _fft.irfft2(buf, s=(h, w), axes=(-2, -1))

    def backward(gy: np.ndarray) -> np.ndarray:
        graw = _fft.rfft2(gy, axes=(-2, -1))
        gbuf = np.zeros((c_in, b, h, w // 2 + 1), dtype=graw.dtype)
        _branch_backward_cm(graw, xk, layer, gbuf, h, w)
        _fold_col0(gbuf)
        return _fft.irfft2(gbuf, s=(h, w), axes=(-2, -1))

    return y, backward


def _contract_forward(xk: np.ndarray, layer: SpectralConvLayer) -> np.ndarray:
    """Per-mode channel contraction Y[k,l,o,b] = sum_i R[i,o,k,l] X[k,l,i,b]."""
    rk = np.ascontiguousarray(layer.weights.compute(xk.dtype).transpose(2, 3, 1, 0))
    return np.matmul(rk, xk)


def _contract_backward(xk: np.ndarray, gyk: np.ndarray, layer: SpectralConvLayer) -> np.ndarray:
    """Accumulate the weight gradient and return the input-mode gradient."""
    gr = np.matmul(np.conj(xk), gyk.transpose(0, 1, 3, 2))  # (k,l,i,o)
    layer.weights.grad += gr.transpose(2, 3, 0, 1)
    rck = np.ascontiguousarray(np.conj(layer.weights.compute(xk.dtype)).transpose(2, 3, 0, 1))
    return np.matmul(rck, gyk)  # (k,l,i,b)


def spectral_conv(x: np.ndarray, layer: SpectralConvLayer):
    """Mode-truncated spectral convolution: transform, contract retained modes, invert.

    Linear in x; modes outside the truncation rectangle are zeroed. The
    backward pass reuses the transforms' adjoints, so it costs one forward
    and one inverse real FFT, same as the forward pass.
    """
    b, c_in, h, w = x.shape
    m1, m2 = layer.modes
    if not layer.admissible(h, w):
        raise ConfigError(f"grid {h}x{w} too small for modes {layer.modes} (needs >= 2x modes)")
    if layer.weights.value.shape[0] != c_in:
        raise ConfigError(
            f"spectral layer expects {layer.weights.value.shape[0]} channels, got {c_in}"
        )
    c_out = layer.weights.value.shape[1]
    spec = _fft.rfft2(x, axes=(-2, -1))
    xk = _gather_modes(spec, m1, m2)
    yk = _contract_forward(xk, layer)
    buf = np.zeros((b, c_out, h, w // 2 + 1), dtype=np.complex128)
    _scatter_modes_add(buf, yk, m1, m2)
    y = _fft.irfft2(buf, s=(h, w), axes=(-2, -1))

    def backward(gy: np.ndarray) -> np.ndarray:
        gspec = irfft2_adjoint(gy)
        gyk = _gather_modes(gspec, m1, m2)
        gxk = _contract_backward(xk, gyk, layer)
        gbuf = np.zeros((b, c_in, h, w // 2 + 1), dtype=np.complex128)
        _scatter_modes_add(gbuf, gxk, m1, m2)
        return rfft2_adjoint(gbuf, w)

    return y, backward


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean over all elements of (pred - target)^2."""
    if pred.shape != target.shape:
        raise ConfigError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))

    def backward(gl: float = 1.0) -> np.ndarray:
        return (2.0 * gl / diff.size) * diff

    return loss, backward


def relative_l2(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the leading (batch) axis of ||pred_b - target_b|| / ||target_b||."""
    if pred.shape != target.shape:
        raise ConfigError(f"relative_l2 shape mismatch: {pred.shape} vs {target.shape}")
    b = pred.shape[0]
    diff = (pred - target).reshape(b, -1)
    tnorm = np.linalg.norm(target.reshape(b, -1), axis=1)
    if np.any(tnorm == 0.0):
        raise DataError("relative_l2: zero-norm target sample")
    return float(np.mean(np.linalg.norm(diff, axis=1) / tnorm))


def relative_l2_loss(pred: np.ndarray, target: np.ndarray):
    """Differentiable relative L2, for training with loss=relative_l2."""
    if pred.shape != target.shape:
        raise ConfigError(f"relative_l2_loss shape mismatch: {pred.shape} vs {target.shape}")
    b = pred.shape[0]
    diff = pred - target
    dflat = diff.reshape(b, -1)
    dnorm = np.linalg.norm(dflat, axis=1)
    tnorm = np.linalg.norm(target.reshape(b, -1), axis=1)
    if np.any(tnorm == 0.0):
        raise DataError("relative_l2_loss: zero-norm target sample")
    loss = float(np.mean(dnorm / tnorm))

    def backward(gl: float = 1.0) -> np.ndarray:
        safe = np.maximum(dnorm, 1e-300)
        scale = gl / (b * safe * tnorm)
        return diff * scale.reshape((b,) + (1,) * (pred.ndim - 1))

    return loss, backward
