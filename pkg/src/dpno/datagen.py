"""Synthetic PDE data with independent numerical oracles.

Three generators feed the operator benchmarks: a Gaussian random field
sampler on the periodic unit square, a finite-volume Darcy pressure solver,
and a pseudospectral Navier-Stokes vorticity stepper. None of them share
code with the model's spectral layers beyond numpy's FFT, so they can serve
as ground truth for it. `dataset_build` turns either solver into a stored
train/test corpus with per-channel normalization statistics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg as _cg

from .container import read_tensor, write_tensor
from .errors import ConfigError, DataError, NumericError
from .tensor import GridMeta

__all__ = [
    "GRFSpec",
    "normalize_with",
    "grf_sample",
    "darcy_coefficient",
    "darcy_solve_fd",
    "NSTrajectory",
    "ns_rollout",
    "default_ns_forcing",
    "downsample_field",
    "FieldDataset",
    "dataset_build",
    "load_dataset",
]


# ---------------------------------------------------------------------------
# Gaussian random fields


@dataclass(frozen=True)
class GRFSpec:
    """Mean-zero Gaussian field with covariance (-lap + tau^2 I)^(-alpha).

    alpha > 1 keeps realizations continuous on the square; tau sets the
    inverse correlation length. Defaults match the common Darcy setup.
    """

    resolution: int
    tau: float = 3.0
    alpha: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 8:
            raise ConfigError(f"GRF resolution must be >= 8, got {self.resolution}")
        if self.alpha <= 1.0:
            raise ConfigError(f"GRF alpha must exceed 1, got {self.alpha}")
        if self.tau <= 0.0:
            raise ConfigError(f"GRF tau must be positive, got {self.tau}")


def _grf_eigenvalues(h: int, w: int, tau: float, alpha: float) -> np.ndarray:
    """Spectral density (4 pi^2 |k|^2 + tau^2)^(-alpha) on the full FFT grid."""
    ky = np.fft.fftfreq(h, d=1.0 / h)
    kx = np.fft.fftfreq(w, d=1.0 / w)
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    return (4.0 * np.pi**2 * k2 + tau**2) ** (-alpha)


def _grf_draw(h: int, w: int, tau: float, alpha: float, rng: np.random.Generator) -> np.ndarray:
    # White noise remains white under the unnormalized DFT up to a factor
    # sqrt(HW), so filtering its transform and inverting yields a field whose
    # periodogram |F u|^2 / (HW)^2 has expectation exactly the density above.
    xi = rng.standard_normal((h, w))
    coeff = np.fft.fft2(xi)
    coeff *= np.sqrt(_grf_eigenvalues(h, w, tau, alpha))
    u = np.fft.ifft2(coeff).real
    u *= np.sqrt(h * w)
    return u


def grf_sample(spec: GRFSpec) -> np.ndarray:
    """Draw one field on spec.resolution^2 nodes, deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    return _grf_draw(spec.resolution, spec.resolution, spec.tau, spec.alpha, rng)


# ---------------------------------------------------------------------------
# Darcy flow


def darcy_coefficient(g: np.ndarray, a_high: float = 12.0, a_low: float = 3.0) -> np.ndarray:
    """Two-phase diffusion coefficient: a_high where g >= 0, else a_low."""
    g = np.asarray(g, dtype=np.float64)
    return np.where(g >= 0.0, a_high, a_low)


def darcy_solve_fd(a: np.ndarray, f=1.0, rtol: float = 1e-8, maxiter: int | None = None) -> np.ndarray:
    """Solve -div(a grad u) = f on the unit square with u = 0 on the boundary.

    Node-centered grid with spacing 1/(H-1). The five-point stencil uses
    harmonic-mean interface coefficients, which keep second-order accuracy
    across the jumps a piecewise-constant coefficient produces. The symmetric
    positive-definite system is solved by Jacobi-preconditioned conjugate
    gradients to relative residual `rtol`.

    f may be a constant or a full-grid array; only interior values enter.
    Raises NumericError if CG fails to converge within maxiter (default 10*H)
    iterations, which signals a pathological coefficient field.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"coefficient field must be square 2-D, got shape {a.shape}")
    hn = a.shape[0]
    if hn < 4:
        raise ConfigError(f"grid too small for an interior: {hn}x{hn}")
    if not np.all(a > 0.0):
        raise DataError("diffusion coefficient must be positive everywhere")

    n = hn - 2
    spacing = 1.0 / (hn - 1)
    am = a[1:-1, 1:-1]

    def harm(p, q):
        return 2.0 * p * q / (p + q)

    a_e = harm(am, a[1:-1, 2:])
    a_w = harm(am, a[1:-1, :-2])
    a_s = harm(am, a[2:, 1:-1])
    a_n = harm(am, a[:-2, 1:-1])

    diag = (a_e + a_w + a_s + a_n).ravel()
    # off-diagonal couplings drop where the neighbor is a Dirichlet node;
    # zeroing the row-end entries also kills the spurious wrap in the +-1 bands
    east = a_e.copy()
    east[:, -1] = 0.0
    west = a_w.copy()
    west[:, 0] = 0.0
    south = a_s.copy()
    south[-1, :] = 0.0
    north = a_n.copy()
    north[0, :] = 0.0

    mat = sparse.diags_array(
        (
            diag,
            -east.ravel()[:-1],
            -west.ravel()[1:],
            -south.ravel()[:-n],
            -north.ravel()[n:],
        ),
        offsets=(0, 1, -1, n, -n),
        format="csr",
    )
    mat = mat.multiply(1.0 / spacing**2).tocsr()

    if np.isscalar(f):
        rhs = np.full(n * n, float(f))
    else:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != a.shape:
            raise ConfigError(f"forcing shape {f.shape} does not match grid {a.shape}")
        rhs = f[1:-1, 1:-1].ravel().copy()

    if maxiter is None:
        maxiter = 10 * hn
    precond = sparse.diags_array((spacing**2 / diag,), offsets=(0,), format="csr")
    u_int, info = _cg(mat, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
    if info > 0:
        res = np.linalg.norm(mat @ u_int - rhs) / max(np.linalg.norm(rhs), 1e-300)
        raise NumericError(
            f"Darcy CG did not reach rtol={rtol:g} in {maxiter} iterations "
            f"(relative residual {res:.3e}); coefficient field looks pathological"
        )
    if info < 0:
        raise NumericError(f"Darcy CG reported an invalid system (info={info})")

    u = np.zeros((hn, hn))
    u[1:-1, 1:-1] = u_int.reshape(n, n)
    return u


# ---------------------------------------------------------------------------
# Navier-Stokes vorticity


def darcy_residual(a: np.ndarray, u: np.ndarray, f=1.0) -> float:
    """Relative interior residual of the five-point scheme at a candidate u.

    Applies the stencil directly, without the sparse assembly the solver
    uses, so it doubles as an a-posteriori check on both the solve and the
    assembly path.
    """
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if a.shape != u.shape or a.ndim != 2:
        raise ConfigError(f"coefficient/solution shape mismatch: {a.shape} vs {u.shape}")
    hn = a.shape[0]
    spacing = 1.0 / (hn - 1)
    am, um = a[1:-1, 1:-1], u[1:-1, 1:-1]

    def harm(p, q):
        return 2.0 * p * q / (p + q)

    flux = (
        harm(am, a[1:-1, 2:]) * (um - u[1:-1, 2:])
        + harm(am, a[1:-1, :-2]) * (um - u[1:-1, :-2])
        + harm(am, a[2:, 1:-1]) * (um - u[2:, 1:-1])
        + harm(am, a[:-2, 1:-1]) * (um - u[:-2, 1:-1])
    ) / spacing**2
    if np.isscalar(f):
        rhs = np.full_like(flux, float(f))
    else:
        rhs = np.asarray(f, dtype=np.float64)[1:-1, 1:-1]
    denom = max(float(np.linalg.norm(rhs)), 1e-300)
    return float(np.linalg.norm(flux - rhs) / denom)


@dataclass
class NSTrajectory:
    """Vorticity snapshots of a 2-D periodic flow.

    omega has shape (T, H, W); snapshot t sits at time t * record_stride * dt,
    with omega[0] the initial condition.
    """

    omega: np.ndarray
    nu: float
    dt: float
    record_stride: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.omega.shape[0]) * (self.record_stride * self.dt)


def default_ns_forcing(h: int, w: int) -> np.ndarray:
    """0.1 (sin(2 pi (x+y)) + cos(2 pi (x+y))) on the periodic grid."""
    y = np.arange(h) / h
    x = np.arange(w) / w
    phase = 2.0 * np.pi * (x[None, :] + y[:, None])
    return 0.1 * (np.sin(phase) + np.cos(phase))


def ns_rollout(
    omega0: np.ndarray,
    nu: float = 1e-3,
    t_final: float = 20.0,
    dt: float = 1e-3,
    record_stride: int = 1000,
    forcing: np.ndarray | None = None,
) -> NSTrajectory:
    """Integrate 2-D incompressible vorticity transport pseudospectrally.

    The stream function comes from spectral inversion of -lap(psi) = omega
    with the mean mode pinned to zero, velocities from its curl, and the
    advection term u . grad(omega) is formed in physical space under 2/3-rule
    dealiasing. Each step treats diffusion with Crank-Nicolson and the
    advection + forcing terms explicitly through a midpoint predictor and a
    trapezoidal corrector, so the whole step is second order in dt.

    forcing defaults to `default_ns_forcing`; pass an explicit array (or
    zeros) to override. Snapshots are recorded every record_stride steps,
    starting with omega0 itself. Raises NumericError if the state stops being
    finite, the usual sign of an under-resolved or unstable run.
    """
    omega0 = np.asarray(omega0, dtype=np.float64)
    if omega0.ndim != 2 or omega0.shape[0] != omega0.shape[1]:
        raise ConfigError(f"initial vorticity must be square 2-D, got shape {omega0.shape}")
    h, w = omega0.shape
    if dt <= 0.0 or t_final < 0.0 or nu < 0.0:
        raise ConfigError(f"need dt > 0, t_final >= 0, nu >= 0; got dt={dt}, t_final={t_final}, nu={nu}")
    if record_stride < 1:
        raise ConfigError(f"record_stride must be >= 1, got {record_stride}")

    n_steps = int(round(t_final / dt))
    if forcing is None:
        forcing = default_ns_forcing(h, w)
    else:
        forcing = np.asarray(forcing, dtype=np.float64)
        if forcing.shape != (h, w):
            raise ConfigError(f"forcing shape {forcing.shape} does not match grid {(h, w)}")

    ky = 2.0 * np.pi * np.fft.fftfreq(h, d=1.0 / h)[:, None]
    kx = 2.0 * np.pi * np.fft.rfftfreq(w, d=1.0 / w)[None, :]
    k2 = kx**2 + ky**2
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0.0] = 1.0 / k2[k2 > 0.0]

    # 2/3-rule mask on the half-spectrum
    keep_y = np.abs(np.fft.fftfreq(h, d=1.0 / h)) <= h // 3
    keep_x = np.fft.rfftfreq(w, d=1.0 / w) <= w // 3
    dealias = keep_y[:, None] & keep_x[None, :]

    visc = 0.5 * dt * nu * k2
    cn_num = 1.0 - visc
    cn_den = 1.0 / (1.0 + visc)

    omega_hat = np.fft.rfft2(omega0)
    f_hat = np.fft.rfft2(forcing)

    def advection_hat(w_hat):
        psi_hat = w_hat * inv_k2
        u = np.fft.irfft2(1j * ky * psi_hat, s=(h, w))
        v = np.fft.irfft2(-1j * kx * psi_hat, s=(h, w))
        wx = np.fft.irfft2(1j * kx * w_hat, s=(h, w))
        wy = np.fft.irfft2(1j * ky * w_hat, s=(h, w))
        out = np.fft.rfft2(u * wx + v * wy)
        out *= dealias
        return -out

    snaps = [omega0.copy()]
    # a diverging run overflows before the isfinite probe fires; that path is
    # reported through NumericError, so the transient warnings stay quiet
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            g0 = advection_hat(omega_hat) + f_hat
            mid = (cn_num * omega_hat + dt * g0) * cn_den
            g1 = advection_hat(mid) + f_hat
            omega_hat = (cn_num * omega_hat + 0.5 * dt * (g0 + g1)) * cn_den
            if step % record_stride == 0:
                snap = np.fft.irfft2(omega_hat, s=(h, w))
                if not np.all(np.isfinite(snap)):
                    t_now = step * dt
                    raise NumericError(f"vorticity rollout blew up by t={t_now:g} (non-finite values)")
                snaps.append(snap)

    if n_steps % record_stride != 0:
        # partial tail is not recorded, but still guard the final state
        if not np.all(np.isfinite(omega_hat)):
            raise NumericError(f"vorticity rollout blew up by t={t_final:g} (non-finite values)")
    return NSTrajectory(omega=np.stack(snaps, axis=0), nu=nu, dt=dt, record_stride=record_stride)


# ---------------------------------------------------------------------------
# Resolution handling


def downsample_field(x: np.ndarray, factor: int) -> np.ndarray:
    """Keep every factor-th node along the last two axes.

    Strided subsampling preserves nested periodic grids exactly, which is the
    convention multi-resolution operator benchmarks assume. Averaging would
    smear discontinuous coefficient fields instead.
    """
    x = np.asarray(x)
    factor = int(factor)
    if factor < 1:
        raise ConfigError(f"downsample factor must be >= 1, got {factor}")
    if x.ndim < 2:
        raise ConfigError(f"field needs at least 2 axes, got shape {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    if h % factor != 0 or w % factor != 0:
        raise ConfigError(f"factor {factor} does not divide grid {h}x{w}")
    return x[..., ::factor, ::factor]


def _decimate_to_nodes(u: np.ndarray, resolution: int) -> np.ndarray:
    """Take every second node of a (2R-1)-point node-centered grid."""
    g = u.shape[-1]
    if g != 2 * resolution - 1:
        raise ConfigError(f"expected oracle grid {2 * resolution - 1}, got {g}")
    return u[..., ::2, ::2]


# ---------------------------------------------------------------------------
# Dataset assembly


def normalize_with(x: np.ndarray, norm_stats: dict) -> np.ndarray:
    """Apply stored per-channel statistics to a (N, C, H, W) input batch.

    Shared by dataset access and cross-resolution evaluation so a checkpoint's
    statistics yield bit-identical normalization wherever they are applied.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != norm_stats["input_mean"].shape[0]:
        raise DataError(
            f"expected (N, {norm_stats['input_mean'].shape[0]}, H, W) inputs, got shape {x.shape}"
        )
    mean = norm_stats["input_mean"][None, :, None, None]
    std = norm_stats["input_std"][None, :, None, None]
    return (x - mean) / std


@dataclass
class FieldDataset:
    """Paired input/target fields with train/test split and input statistics.

    inputs and targets are stored raw; `normalize_inputs` applies the
    train-split per-channel statistics kept in norm_stats, and targets carry
    a fixed `target_scale` already applied (recorded so predictions can be
    mapped back to physical units).
    """

    task: str
    inputs: np.ndarray
    targets: np.ndarray
    train_indices: np.ndarray
    test_indices: np.ndarray
    norm_stats: dict
    grid: GridMeta
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n:
            raise DataError(
                f"inputs hold {n} samples but targets hold {self.targets.shape[0]}"
            )
        if len(self.train_indices) + len(self.test_indices) != n:
            raise DataError("split sizes do not add up to the sample count")

    @property
    def n_train(self) -> int:
        return len(self.train_indices)

    @property
    def n_test(self) -> int:
        return len(self.test_indices)

    def normalize_inputs(self, x: np.ndarray) -> np.ndarray:
        return normalize_with(x, self.norm_stats)

    def train_arrays(self):
        return (
            self.normalize_inputs(self.inputs[self.train_indices]),
            self.targets[self.train_indices],
        )

    def test_arrays(self):
        return (
            self.normalize_inputs(self.inputs[self.test_indices]),
            self.targets[self.test_indices],
        )

    def save(self, out_dir) -> None:
        """Write manifest + container files; regeneration is byte-identical."""
        os.makedirs(out_dir, exist_ok=True)
        write_tensor(os.path.join(out_dir, "inputs.bin"), self.inputs)
        write_tensor(os.path.join(out_dir, "targets.bin"), self.targets)
        lines = [f"task = {self.task}"]
        lines.append(f"n_train = {self.n_train}")
        lines.append(f"n_test = {self.n_test}")
        lines.append(f"resolution = {self.grid.height}")
        periodic = "true" if self.grid.periodic[0] else "false"
        lines.append(f"periodic = {periodic}")
        for key in sorted(self.meta):
            lines.append(f"meta.{key} = {_fmt(self.meta[key])}")
        lines.append(f"target_scale = {_fmt(self.norm_stats['target_scale'])}")
        for name in ("input_mean", "input_std"):
            vals = ",".join(_fmt(v) for v in self.norm_stats[name])
            lines.append(f"{name} = {vals}")
        with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def load_dataset(path) -> FieldDataset:
    """Read a dataset directory written by FieldDataset.save."""
    manifest = os.path.join(path, "manifest.txt")
    if not os.path.isfile(manifest):
        raise DataError(f"no dataset manifest at {manifest}")
    fields: dict[str, str] = {}
    with open(manifest) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed manifest line: {line!r}")
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
    try:
        task = fields["task"]
        n_train = int(fields["n_train"])
        n_test = int(fields["n_test"])
        resolution = int(fields["resolution"])
        periodic = fields["periodic"] == "true"
        target_scale = float(fields["target_scale"])
        mean = np.array([float(v) for v in fields["input_mean"].split(",")])
        std = np.array([float(v) for v in fields["input_std"].split(",")])
    except KeyError as exc:
        raise DataError(f"dataset manifest is missing field {exc}") from exc
    meta = {k[len("meta.") :]: v for k, v in fields.items() if k.startswith("meta.")}

    inputs = read_tensor(os.path.join(path, "inputs.bin"))
    targets = read_tensor(os.path.join(path, "targets.bin"))
    if inputs.shape[0] != n_train + n_test:
        raise DataError(
            f"manifest promises {n_train + n_test} samples, inputs.bin holds {inputs.shape[0]}"
        )
    grid = GridMeta(resolution, resolution, periodic=(periodic, periodic))
    return FieldDataset(
        task=task,
        inputs=inputs,
        targets=targets,
        train_indices=np.arange(n_train),
        test_indices=np.arange(n_train, n_train + n_test),
        norm_stats={"input_mean": mean, "input_std": std, "target_scale": target_scale},
        grid=grid,
        meta=meta,
    )


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # pure in (seed, index) so samples can be generated in any order
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _coordinate_channels(resolution: int) -> np.ndarray:
    ax = np.arange(resolution) / resolution
    x = np.broadcast_to(ax[None, :], (resolution, resolution))
    y = np.broadcast_to(ax[:, None], (resolution, resolution))
    return np.stack([x, y], axis=0)


def darcy_sample_replay(seed, index, resolution, tau=3.0, alpha=2.0, oracle_grid=None):
    """Regenerate one sample's fine-grid coefficient and solution.

    Bit-identical to what dataset_build produced for (seed, index) before
    decimation, so a stored dataset can be audited without rebuilding it.
    """
    if oracle_grid is None:
        oracle_grid = 2 * resolution - 1
    if oracle_grid < 2 * resolution - 1:
        raise ConfigError(
            f"Darcy oracle grid {oracle_grid} is below the 2x rule "
            f"({2 * resolution - 1} for resolution {resolution})"
        )
    rng = _sample_rng(seed, index)
    g = _grf_draw(oracle_grid, oracle_grid, tau, alpha, rng)
    a = darcy_coefficient(g)
    return a, darcy_solve_fd(a)


def _build_darcy(n_total, resolution, seed, tau, alpha, oracle_grid):
    inputs = np.empty((n_total, 1, resolution, resolution))
    targets = np.empty((n_total, 1, resolution, resolution))
    for i in range(n_total):
        a, u = darcy_sample_replay(seed, i, resolution, tau, alpha, oracle_grid)
        inputs[i, 0] = _decimate_to_nodes(a, resolution)
        targets[i, 0] = _decimate_to_nodes(u, resolution)
    return inputs, targets


def _build_ns(n_total, resolution, seed, tau, alpha, nu, dt, ns_mode):
    coords = _coordinate_channels(resolution)
    stride = int(round(1.0 / dt))
    if abs(stride * dt - 1.0) > 1e-9:
        raise ConfigError(f"dt={dt} does not divide the unit snapshot interval")
    if ns_mode == "window":
        c_in, c_out = 12, 10
    else:
        c_in, c_out = 3, 1
    inputs = np.empty((n_total, c_in, resolution, resolution))
    targets = np.empty((n_total, c_out, resolution, resolution))
    for i in range(n_total):
        rng = _sample_rng(seed, i)
        omega0 = _grf_draw(resolution, resolution, tau, alpha, rng)
        omega0 -= omega0.mean()
        traj = ns_rollout(omega0, nu=nu, t_final=20.0, dt=dt, record_stride=stride)
        if ns_mode == "window":
            inputs[i, :10] = traj.omega[1:11]
            inputs[i, 10:] = coords
            targets[i] = traj.omega[11:21]
        else:
            t = int(rng.integers(1, 20))
            inputs[i, 0] = traj.omega[t]
            inputs[i, 1:] = coords
            targets[i, 0] = traj.omega[t + 1]
    return inputs, targets


def dataset_build(
    task: str,
    n_train: int,
    n_test: int,
    resolution: int,
    seed: int = 0,
    tau: float = 3.0,
    alpha: float = 2.0,
    oracle_grid: int | None = None,
    nu: float = 1e-3,
    dt: float = 1e-3,
    ns_mode: str = "window",
) -> FieldDataset:
    """Generate a paired dataset from one of the synthetic solvers.

    darcy: input is the two-phase coefficient field, target the pressure,
    both produced on a (2*resolution - 1)-node oracle grid and decimated to
    every second node so the stored solution is finer than anything the
    surrogate could infer from the stored inputs alone. Targets are scaled
    by 100 to sit at order one.

    ns: each sample is one vorticity trajectory; in "window" mode the input
    stacks snapshots at t = 1..10 plus two coordinate channels and the target
    stacks t = 11..20. In "step" mode one transition (omega_t -> omega_{t+1})
    is drawn per trajectory with t chosen by the per-sample stream.

    Sample i depends only on (seed, i), so regeneration with the same seed is
    bit-identical and generation could be sharded by index. Normalization
    statistics come from the train split alone.
    """
    if task not in ("darcy", "ns"):
        raise ConfigError(f"unknown dataset task {task!r}")
    if n_train < 1 or n_test < 0:
        raise ConfigError(f"need n_train >= 1 and n_test >= 0, got {n_train}/{n_test}")
    if ns_mode not in ("window", "step"):
        raise ConfigError(f"ns_mode must be 'window' or 'step', got {ns_mode!r}")

    n_total = n_train + n_test
    if task == "darcy":
        if resolution < 8:
            raise ConfigError(f"resolution must be >= 8, got {resolution}")
        inputs, targets = _build_darcy(n_total, resolution, seed, tau, alpha, oracle_grid)
        target_scale = 100.0
        periodic = False
        meta = {
            "seed": seed,
            "tau": tau,
            "alpha": alpha,
            "oracle_grid": oracle_grid if oracle_grid is not None else 2 * resolution - 1,
        }
    else:
        if resolution < 12:
            # the 2/3-rule needs headroom around the forced mode
            raise ConfigError(f"ns resolution must be >= 12, got {resolution}")
        inputs, targets = _build_ns(n_total, resolution, seed, tau, alpha, nu, dt, ns_mode)
        target_scale = 1.0
        periodic = True
        meta = {"seed": seed, "tau": tau, "alpha": alpha, "nu": nu, "dt": dt, "ns_mode": ns_mode}

    targets *= target_scale
    train_idx = np.arange(n_train)
    mean = inputs[train_idx].mean(axis=(0, 2, 3))
    std = inputs[train_idx].std(axis=(0, 2, 3))
    std = np.where(std < 1e-12, 1.0, std)
    grid = GridMeta(resolution, resolution, periodic=(periodic, periodic))
    return FieldDataset(
        task=task,
        inputs=inputs,
        targets=targets,
        train_indices=train_idx,
        test_indices=np.arange(n_train, n_total),
        norm_stats={"input_mean": mean, "input_std": std, "target_scale": target_scale},
        grid=grid,
        meta=meta,
    )
