"""The deep parallel spectral neural operator.

Layout: a pointwise lifting network raises the input channels to a latent
width; an encoder alternates 3x3 conv + GELU, a stack of parallel operator
blocks, and 2x average pooling; the coarsest scale runs its own block
stack; the decoder mirrors the encoder with nearest upsampling and additive
skips from the pre-pool features; a pointwise projection maps back to the
output channels.

A parallel operator block sums two independent mode-truncated spectral
convolutions (a wide band and a low band) with a pointwise linear path,
then optionally applies GELU. The serial variant chains the two spectral
convolutions instead, each with its own pointwise path, which is the
ablation wiring.

Forward and backward are composed by hand from the layer closures. Block
forward/backward share a single real FFT pair across both branches, since
the transforms are linear in the branch sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .errors import ConfigError
from .layers import (
    ParamTensor,
    SpectralConvLayer,
    _branch_backward_cm,
    _contract_forward,
    _conv3x3_cm,
    _fold_col0,
    _gather_modes_cm,
    _pointwise_cm,
    _scatter_modes_add_cm,
    _spectral_conv_cm,
    avgpool2,
    gelu,
    upsample_nearest2,
)

VARIANTS = ("parallel", "serial")


@dataclass(frozen=True)
class DPNOConfig:
    in_channels: int
    out_channels: int
    width: int = 32
    levels: int = 2
    blocks_per_level: int = 2
    modes_a: tuple[int, int] = (16, 16)
    modes_b: tuple[int, int] | None = None  # default: half of modes_a
    use_skip: bool = True
    final_block_activation: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.modes_b is None:
            object.__setattr__(self, "modes_b", (self.modes_a[0] // 2, self.modes_a[1] // 2))
        object.__setattr__(self, "modes_a", tuple(int(m) for m in self.modes_a))
        object.__setattr__(self, "modes_b", tuple(int(m) for m in self.modes_b))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.width < self.in_channels or self.width < self.out_channels:
            raise ConfigError(
                f"width {self.width} must be >= in/out channels "
                f"({self.in_channels}/{self.out_channels}): lifting raises dimension"
            )
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.blocks_per_level < 1:
            raise ConfigError("blocks_per_level must be >= 1")
        if min(self.modes_a) < 1 or min(self.modes_b) < 1:
            raise ConfigError(f"mode counts must be >= 1, got {self.modes_a}/{self.modes_b}")
        for lvl in range(self.levels + 1):
            a, b = self.modes_at(lvl)
            if not (b[0] < a[0] and b[1] < a[1]):
                raise ConfigError(
                    f"modes_b {b} must be elementwise < modes_a {a} at level {lvl}"
                )

    def modes_at(self, level: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Retained mode counts for both branches at a given scale.

        Halved per downsampling stage with floors of 4 (branch A) and 2
        (branch B), so coarse grids keep a roughly constant retained
        fraction of their spectrum. Configs already below a floor keep
        their value unchanged across levels.
        """
        fa = (min(4, self.modes_a[0]), min(4, self.modes_a[1]))
        fb = (min(2, self.modes_b[0]), min(2, self.modes_b[1]))
        a = (max(fa[0], self.modes_a[0] >> level), max(fa[1], self.modes_a[1] >> level))
        b = (max(fb[0], self.modes_b[0] >> level), max(fb[1], self.modes_b[1] >> level))
        return a, b

    def check_grid(self, h: int, w: int) -> None:
        div = 1 << self.levels
        if h % div or w % div:
            raise ConfigError(f"grid {h}x{w} not divisible by 2^levels = {div}")
        for lvl in range(self.levels + 1):
            (a1, a2), _ = self.modes_at(lvl)
            hl, wl = h >> lvl, w >> lvl
            if hl < 2 * a1 or wl < 2 * a2:
                raise ConfigError(
                    f"grid {hl}x{wl} at level {lvl} too small for modes ({a1},{a2})"
                )


@dataclass
class ParallelOperatorBlock:
    """Two truncated spectral branches plus a pointwise path.

    w2/b2 exist only in the serial wiring, where each chained stage keeps
    its own pointwise map.
    """

    branch_a: SpectralConvLayer
    branch_b: SpectralConvLayer
    w: ParamTensor
    b: ParamTensor
    activate: bool
    w2: ParamTensor | None = None
    b2: ParamTensor | None = None

    def __post_init__(self):
        sa, sb = self.branch_a.weights.value.shape, self.branch_b.weights.value.shape
        if sa[:2] != sb[:2]:
            raise ConfigError(f"branch channel extents differ: {sa[:2]} vs {sb[:2]}")

    def params(self):
        out = [self.branch_a.weights, self.branch_b.weights, self.w, self.b]
        if self.w2 is not None:
            out += [self.w2, self.b2]
        return out


def parameter_counts(config: DPNOConfig) -> dict:
    """Closed-form real parameter counts (complex weights count twice)."""
    w, lv, nb = config.width, config.levels, config.blocks_per_level
    lift = w * config.in_channels + w + w * w + w
    convs = 2 * lv * (w * w * 9 + w)
    project = 2 * w * w + 2 * w + config.out_channels * 2 * w + config.out_channels
    spectral = 0
    pointwise_per_block = w * w + w
    for lvl in range(lv + 1):
        (a1, a2), (b1, b2) = config.modes_at(lvl)
        spectral += nb * 2 * (w * w * 2 * a1 * a2 + w * w * 2 * b1 * b2)
    blocks_parallel = spectral + nb * (lv + 1) * pointwise_per_block
    blocks_serial = spectral + nb * (lv + 1) * 2 * pointwise_per_block
    base = lift + convs + project
    return {"parallel": base + blocks_parallel, "serial": base + blocks_serial}


class DPNOModel:
    def __init__(self, config: DPNOConfig, variant: str = "parallel"):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        self.config = config
        self.variant = variant
        # training may lower this to float32; parameters stay float64 masters
        self.compute_dtype = np.float64
        rng = np.random.default_rng(np.random.PCG64(config.seed))
        w = config.width

        def linear(c_out, c_in, name):
            s = np.sqrt(1.0 / c_in)
            weight = ParamTensor(rng.uniform(-s, s, size=(c_out, c_in)), f"{name}.weight")
            bias = ParamTensor(np.zeros(c_out), f"{name}.bias")
            return weight, bias

        def conv(name):
            s = np.sqrt(1.0 / (w * 9))
            kernel = ParamTensor(rng.uniform(-s, s, size=(w, w, 3, 3)), f"{name}.kernel")
            bias = ParamTensor(np.zeros(w), f"{name}.bias")
            return kernel, bias

        self.lift = [linear(w, config.in_channels, "lift.0"), linear(w, w, "lift.1")]
        self.enc_convs = []
        self.blocks: list[list[ParallelOperatorBlock]] = []
        for lvl in range(config.levels):
            self.enc_convs.append(conv(f"enc.{lvl}"))
            self.blocks.append(self._make_blocks(lvl, rng))
        self.blocks.append(self._make_blocks(config.levels, rng))
        self.dec_convs = [conv(f"dec.{lvl}") for lvl in reversed(range(config.levels))]
        self.dec_convs.reverse()  # indexed by level again
        self.project = [linear(2 * w, w, "project.0"), linear(config.out_channels, 2 * w, "project.1")]

        self.params: list[ParamTensor] = []
        for pair in self.lift:
            self.params += list(pair)
        for lvl in range(config.levels):
            self.params += list(self.enc_convs[lvl])
            for blk in self.blocks[lvl]:
                self.params += blk.params()
        for blk in self.blocks[config.levels]:
            self.params += blk.params()
        for lvl in reversed(range(config.levels)):
            self.params += list(self.dec_convs[lvl])
        for pair in self.project:
            self.params += list(pair)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names")
        self.param_count = sum(p.size_real for p in self.params)
        expected = parameter_counts(config)[variant]
        assert self.param_count == expected, (self.param_count, expected)

    def _make_blocks(self, lvl: int, rng) -> list:
        config = self.config
        w = config.width
        (a1, a2), (b1, b2) = config.modes_at(lvl)
        out = []
        for j in range(config.blocks_per_level):
            name = f"level.{lvl}.block.{j}"
            branch_a = SpectralConvLayer.init(w, w, a1, a2, rng, f"{name}.a.weights")
            branch_b = SpectralConvLayer.init(w, w, b1, b2, rng, f"{name}.b.weights")
            s = np.sqrt(1.0 / w)
            wp = ParamTensor(rng.uniform(-s, s, size=(w, w)), f"{name}.w.weight")
            bp = ParamTensor(np.zeros(w), f"{name}.w.bias")
            last = j == config.blocks_per_level - 1
            activate = config.final_block_activation if last else True
            w2 = b2p = None
            if self.variant == "serial":
                w2 = ParamTensor(rng.uniform(-s, s, size=(w, w)), f"{name}.w2.weight")
                b2p = ParamTensor(np.zeros(w), f"{name}.w2.bias")
            out.append(ParallelOperatorBlock(branch_a, branch_b, wp, bp, activate, w2, b2p))
        return out

    def zero_grads(self):
        for p in self.params:
            p.zero_grad()

    # ----- forward/backward -----

    def forward(self, x: np.ndarray):
        """Full forward pass; returns (y, backward) where backward(gy) -> gx.

        Internally activations live as (C, B, H, W); input and output (and
        their gradients) are transposed at the boundary, which is cheap
        because only the latent width is ever large.
        """
        config = self.config
        x = np.asarray(x, dtype=self.compute_dtype)
        if x.ndim != 4 or x.shape[1] != config.in_channels:
            raise ConfigError(
                f"expected input (B, {config.in_channels}, H, W), got {x.shape}"
            )
        config.check_grid(x.shape[2], x.shape[3])
        backs = []

        def push(pair):
            y, back = pair
            backs.append(back)
            return y

        v = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
        v = push(_pointwise_cm(v, *self.lift[0]))
        v = push(gelu(v))
        v = push(_pointwise_cm(v, *self.lift[1]))

        skip_vals: dict[int, np.ndarray] = {}
        skip_backs: dict[int, np.ndarray] = {}
        for lvl in range(config.levels):
            v = push(_conv3x3_cm(v, *self.enc_convs[lvl]))
            v = push(gelu(v))
            for blk in self.blocks[lvl]:
                v = push(self._block(v, blk))
            if config.use_skip:
                # fan-in point: gradient from the decoder skip-add joins here
                skip_vals[lvl] = v
                backs.append(_skip_source(skip_backs, lvl))
            v = push(avgpool2(v))

        for blk in self.blocks[config.levels]:
            v = push(self._block(v, blk))

        for lvl in reversed(range(config.levels)):
            v = push(upsample_nearest2(v))
            if config.use_skip:
                v += skip_vals.pop(lvl)
                backs.append(_skip_add(skip_backs, lvl))
            v = push(_conv3x3_cm(v, *self.dec_convs[lvl]))
            v = push(gelu(v))

        v = push(_pointwise_cm(v, *self.project[0]))
        v = push(gelu(v))
        v = push(_pointwise_cm(v, *self.project[1]))
        y = np.ascontiguousarray(v.transpose(1, 0, 2, 3))

        def backward(gy: np.ndarray) -> np.ndarray:
            g = np.ascontiguousarray(np.asarray(gy, dtype=x.dtype).transpose(1, 0, 2, 3))
            for back in reversed(backs):
                g = back(g)
            return np.ascontiguousarray(g.transpose(1, 0, 2, 3))

        return y, backward

    def apply(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward(x)
        return y

    def _block(self, v, blk: ParallelOperatorBlock):
        if self.variant == "serial":
            return _serial_block(v, blk)
        return _parallel_block(v, blk)

    def state_tensors(self) -> dict:
        return {p.name: p.value for p in self.params}

    def load_state(self, tensors: dict) -> None:
        for p in self.params:
            if p.name not in tensors:
                raise ConfigError(f"checkpoint missing parameter {p.name}")
            src = tensors[p.name]
            if src.shape != p.value.shape:
                raise ConfigError(
                    f"parameter {p.name}: shape {src.shape} != expected {p.value.shape}"
                )
            p.value[...] = src


def _skip_add(skip_backs: dict, lvl: int):
    """Decoder side of a skip connection: identity forward, forks gradient."""

    def backward(gy):
        skip_backs[lvl] = gy
        return gy

    return backward


def _skip_source(skip_backs: dict, lvl: int):
    """Encoder side: during backward, add the gradient the decoder deposited."""

    def backward(gy):
        return gy + skip_backs.pop(lvl)

    return backward


def _parallel_block(v: np.ndarray, blk: ParallelOperatorBlock):
    """sigma(SC_a(v) + SC_b(v) + W v + b); one FFT pair shared by both branches.

    v is channel-major (C, B, H, W).
    """
    c, b, h, w = v.shape
    for layer in (blk.branch_a, blk.branch_b):
        if not layer.admissible(h, w):
            raise ConfigError(f"grid {h}x{w} too small for modes {layer.modes}")
    spec = _fft.rfft2(v, axes=(-2, -1))
    xka = _gather_modes_cm(spec, *blk.branch_a.modes)
    xkb = _gather_modes_cm(spec, *blk.branch_b.modes)
    c_out = blk.branch_a.weights.value.shape[1]
    buf = np.zeros((c_out, b, h, w // 2 + 1), dtype=spec.dtype)
    _scatter_modes_add_cm(buf, _contract_forward(xka, blk.branch_a), *blk.branch_a.modes)
    _scatter_modes_add_cm(buf, _contract_forward(xkb, blk.branch_b), *blk.branch_b.modes)
    out = _fft.irfft2(buf, s=(h, w), axes=(-2, -1))
    wv, back_w = _pointwise_cm(v, blk.w, blk.b)
    out += wv
    if blk.activate:
        out, back_act = gelu(out)
    else:
        back_act = None

    def backward(gy: np.ndarray) -> np.ndarray:
        gs = back_act(gy) if back_act is not None else gy
        gx = back_w(gs)
        graw = _fft.rfft2(gs, axes=(-2, -1))
        gbuf = np.zeros((c, b, h, w // 2 + 1), dtype=graw.dtype)
        _branch_backward_cm(graw, xka, blk.branch_a, gbuf, h, w)
        _branch_backward_cm(graw, xkb, blk.branch_b, gbuf, h, w)
        _fold_col0(gbuf)
        gx += _fft.irfft2(gbuf, s=(h, w), axes=(-2, -1))
        return gx

    return out, backward


def _serial_block(v: np.ndarray, blk: ParallelOperatorBlock):
    """sigma(SC_b(sigma(SC_a(v) + W1 v)) + W2 v): branches chained, ablation wiring.

    v is channel-major (C, B, H, W).
    """
    if blk.w2 is None:
        raise ConfigError("serial wiring requires the second pointwise map")
    sa, back_a = _spectral_conv_cm(v, blk.branch_a)
    w1v, back_w1 = _pointwise_cm(v, blk.w, blk.b)
    s1 = sa + w1v
    hmid, back_mid = gelu(s1)
    sb, back_b = _spectral_conv_cm(hmid, blk.branch_b)
    w2v, back_w2 = _pointwise_cm(v, blk.w2, blk.b2)
    out = sb + w2v
    if blk.activate:
        out, back_act = gelu(out)
    else:
        back_act = None

    def backward(gy: np.ndarray) -> np.ndarray:
        gs = back_act(gy) if back_act is not None else gy
        gx = back_w2(gs)
        gmid = back_b(gs)
        gs1 = back_mid(gmid)
        gx += back_w1(gs1)
        gx += back_a(gs1)
        return gx

    return out, backward


# ----- spec-level entry points -----


def model_init(config: DPNOConfig, variant: str = "parallel") -> DPNOModel:
    """Build a model with seed-deterministic initialization."""
    return DPNOModel(config, variant)


def dpno_forward(a: np.ndarray, model: DPNOModel) -> np.ndarray:
    return model.apply(a)


def parallel_block_forward(v: np.ndarray, block: ParallelOperatorBlock) -> np.ndarray:
    vc = np.ascontiguousarray(np.asarray(v, dtype=np.float64).transpose(1, 0, 2, 3))
    y, _ = _parallel_block(vc, block)
    return np.ascontiguousarray(y.transpose(1, 0, 2, 3))


def serial_block_forward(v: np.ndarray, block: ParallelOperatorBlock) -> np.ndarray:
    vc = np.ascontiguousarray(np.asarray(v, dtype=np.float64).transpose(1, 0, 2, 3))
    y, _ = _serial_block(vc, block)
    return np.ascontiguousarray(y.transpose(1, 0, 2, 3))


def apply_at_resolution(model: DPNOModel, a: np.ndarray) -> np.ndarray:
    """Evaluate on a new grid; spectral weights index the same retained modes.

    Admissibility (divisibility, mode headroom at every level) is what
    changes with the grid, not the parameters.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 4:
        raise ConfigError(f"expected (B, C, H, W), got {a.shape}")
    model.config.check_grid(a.shape[2], a.shape[3])
    return model.apply(a)
