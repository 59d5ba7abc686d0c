"""Evaluation protocols: cross-resolution matrices, the parallel-vs-serial
ablation, and spectral diagnostics.

These drive trained models through the benchmark procedures and write both
human-readable tables and machine-parseable files. Everything here is
read-only with respect to checkpoints and datasets.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .container import write_tensor
from .datagen import FieldDataset, normalize_with
from .errors import ConfigError, DataError, DpnoError
from .model import DPNOConfig, DPNOModel
from .tensor import spectral_energy_fraction, spectrum_logmag
from .training import Checkpoint, TrainConfig, _epoch_permutation, checkpoint_load, evaluate, train_run

__all__ = [
    "ZeroShotResult",
    "zero_shot_eval",
    "AblationResult",
    "ablation_run",
    "SpectrumReport",
    "spectrum_report",
    "ModeCoverageReport",
    "mode_coverage_report",
    "band_mask",
]


# ---------------------------------------------------------------------------
# Zero-shot super-resolution matrix


@dataclass
class ZeroShotResult:
    """Metric cells keyed by (train resolution, test resolution)."""

    train_resolutions: list
    test_resolutions: list
    cells: dict

    def render(self) -> str:
        lines = ["relative L2 by train resolution (rows) vs test resolution (columns)"]
        header = "train\\test".ljust(12) + "".join(f"{r:>14d}" for r in self.test_resolutions)
        lines.append(header)
        for tr in self.train_resolutions:
            row = f"{tr:<12d}"
            for te in self.test_resolutions:
                cell = self.cells[(tr, te)]
                if "error" in cell:
                    row += f"{'n/a':>14}"
                else:
                    row += f"{cell['rel_l2']:>14.6e}"
            lines.append(row)
        failures = [
            f"  {tr}->{te}: {cell['error']}"
            for (tr, te), cell in sorted(self.cells.items())
            if "error" in cell
        ]
        if failures:
            lines.append("skipped cells:")
            lines.extend(failures)
        return "\n".join(lines) + "\n"


def _checkpoint_of(entry) -> Checkpoint:
    if isinstance(entry, Checkpoint):
        return entry
    return checkpoint_load(entry)


def _cell_metrics(ck: Checkpoint, model: DPNOModel, ds: FieldDataset) -> dict:
    if ck.data_meta.get("task") and ck.data_meta["task"] != ds.task:
        raise DataError(f"checkpoint was trained on {ck.data_meta['task']}, dataset is {ds.task}")
    ck.model_config.check_grid(ds.grid.height, ds.grid.width)
    if ds.inputs.shape[1] != ck.model_config.in_channels:
        raise DataError(
            f"dataset has {ds.inputs.shape[1]} input channels, model expects "
            f"{ck.model_config.in_channels}"
        )
    # the checkpoint's own statistics and scale apply at every resolution,
    # which makes the native cell bit-equal to the training-time evaluation
    x = normalize_with(ds.inputs[ds.test_indices], ck.norm_stats)
    x = np.ascontiguousarray(x, dtype=model.compute_dtype)
    y = ds.targets[ds.test_indices]
    mse, rel = evaluate(model, x, y, ck.train_config.batch_size, ck.norm_stats["target_scale"])
    return {"mse": mse, "rel_l2": rel}


def zero_shot_eval(checkpoints, datasets, out_dir=None) -> ZeroShotResult:
    """Evaluate each checkpoint on every resolution's test split.

    checkpoints: checkpoint directories or loaded Checkpoint objects, one per
    training resolution. datasets: FieldDataset per test resolution (list or
    {resolution: dataset} mapping). Inadmissible combinations are recorded in
    the affected cell instead of aborting the matrix.
    """
    cks = [_checkpoint_of(c) for c in checkpoints]
    if isinstance(datasets, dict):
        ds_by_res = {int(k): v for k, v in datasets.items()}
    else:
        ds_by_res = {ds.grid.height: ds for ds in datasets}
    if not cks or not ds_by_res:
        raise ConfigError("zero_shot_eval needs at least one checkpoint and one dataset")

    train_res = []
    for ck in cks:
        if "resolution" not in ck.data_meta:
            raise ConfigError("checkpoint manifest lacks data.resolution; cannot place it in the matrix")
        train_res.append(int(ck.data_meta["resolution"]))
    test_res = sorted(ds_by_res)

    cells = {}
    for ck, tr in zip(cks, train_res):
        model = ck.build_model()
        for te in test_res:
            try:
                cells[(tr, te)] = _cell_metrics(ck, model, ds_by_res[te])
            except DpnoError as exc:
                cells[(tr, te)] = {"error": str(exc)}
    result = ZeroShotResult(train_resolutions=train_res, test_resolutions=test_res, cells=cells)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "zero_shot.txt"), "w") as fh:
            fh.write(result.render())
        rows = ["train_resolution,test_resolution,mse,rel_l2,error"]
        for (tr, te), cell in sorted(cells.items()):
            if "error" in cell:
                rows.append(f"{tr},{te},,,{cell['error']}")
            else:
                rows.append(f"{tr},{te},{cell['mse']!r},{cell['rel_l2']!r},")
        with open(os.path.join(out_dir, "zero_shot.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
    return result


# ---------------------------------------------------------------------------
# Parallel vs serial ablation


@dataclass
class AblationSeedRun:
    seed: int
    parallel_mse: float
    parallel_rel_l2: float
    serial_mse: float
    serial_rel_l2: float
    data_order_digest: str


@dataclass
class AblationResult:
    runs: list
    mean_parallel_mse: float = 0.0
    mean_serial_mse: float = 0.0
    std_parallel_mse: float = 0.0
    std_serial_mse: float = 0.0
    mean_parallel_rel_l2: float = 0.0
    mean_serial_rel_l2: float = 0.0
    std_parallel_rel_l2: float = 0.0
    std_serial_rel_l2: float = 0.0
    mse_ratio: float = 0.0
    rel_l2_ratio: float = 0.0

    def render(self) -> str:
        lines = ["parallel vs serial block ablation (shared seeds, data order, and schedule)"]
        lines.append("seed  parallel_mse  serial_mse    parallel_rel  serial_rel    data_order")
        for r in self.runs:
            lines.append(
                f"{r.seed:<6d}{r.parallel_mse:<14.6e}{r.serial_mse:<14.6e}"
                f"{r.parallel_rel_l2:<14.6e}{r.serial_rel_l2:<14.6e}{r.data_order_digest[:12]}"
            )
        lines.append(
            f"mean  {self.mean_parallel_mse:<14.6e}{self.mean_serial_mse:<14.6e}"
            f"{self.mean_parallel_rel_l2:<14.6e}{self.mean_serial_rel_l2:<14.6e}"
        )
        lines.append(
            f"std   {self.std_parallel_mse:<14.6e}{self.std_serial_mse:<14.6e}"
            f"{self.std_parallel_rel_l2:<14.6e}{self.std_serial_rel_l2:<14.6e}"
        )
        lines.append(f"mse ratio (parallel/serial):    {self.mse_ratio:.6f}")
        lines.append(f"rel_l2 ratio (parallel/serial): {self.rel_l2_ratio:.6f}")
        return "\n".join(lines) + "\n"


def _data_order_digest(seed: int, epochs: int, n_train: int) -> str:
    sha = hashlib.sha256()
    for epoch in range(1, epochs + 1):
        sha.update(_epoch_permutation(seed, epoch, n_train).tobytes())
    return sha.hexdigest()


def ablation_run(
    data: FieldDataset,
    model_config: DPNOConfig,
    train_config: TrainConfig,
    seeds=(0, 1, 2),
    out_dir=None,
) -> AblationResult:
    """Train matched parallel and serial models per seed and compare errors.

    Both variants of one seed share initialization seed, hyperparameters, and
    the mini-batch order (the digest column records the shared shuffle stream,
    a pure function of seed and epoch count). Reports per-seed errors, means
    with spread, and the parallel/serial ratios.
    """
    if len(seeds) < 1:
        raise ConfigError("ablation needs at least one seed")
    runs = []
    for seed in seeds:
        mc = replace(model_config, seed=int(seed))
        tc = replace(train_config, seed=int(seed))
        digest = _data_order_digest(tc.seed, tc.epochs, data.n_train)
        final = {}
        for variant in ("parallel", "serial"):
            state = train_run(mc, data, tc, out_dir=None, variant=variant)
            final[variant] = state.records[-1]
        runs.append(
            AblationSeedRun(
                seed=int(seed),
                parallel_mse=final["parallel"].test_mse,
                parallel_rel_l2=final["parallel"].test_rel_l2,
                serial_mse=final["serial"].test_mse,
                serial_rel_l2=final["serial"].test_rel_l2,
                data_order_digest=digest,
            )
        )

    pm = np.array([r.parallel_mse for r in runs])
    sm = np.array([r.serial_mse for r in runs])
    pr = np.array([r.parallel_rel_l2 for r in runs])
    sr = np.array([r.serial_rel_l2 for r in runs])
    result = AblationResult(
        runs=runs,
        mean_parallel_mse=float(pm.mean()),
        mean_serial_mse=float(sm.mean()),
        std_parallel_mse=float(pm.std()),
        std_serial_mse=float(sm.std()),
        mean_parallel_rel_l2=float(pr.mean()),
        mean_serial_rel_l2=float(sr.mean()),
        std_parallel_rel_l2=float(pr.std()),
        std_serial_rel_l2=float(sr.std()),
        mse_ratio=float(pm.mean() / sm.mean()),
        rel_l2_ratio=float(pr.mean() / sr.mean()),
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablation.txt"), "w") as fh:
            fh.write(result.render())
        rows = ["seed,parallel_mse,serial_mse,parallel_rel_l2,serial_rel_l2,data_order"]
        for r in runs:
            rows.append(
                f"{r.seed},{r.parallel_mse!r},{r.serial_mse!r},"
                f"{r.parallel_rel_l2!r},{r.serial_rel_l2!r},{r.data_order_digest}"
            )
        with open(os.path.join(out_dir, "ablation.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
    return result


# ---------------------------------------------------------------------------
# Spectrum dominance report


@dataclass
class SpectrumReport:
    radius: float
    dominance: np.ndarray
    logmag: np.ndarray

    @property
    def mean_dominance(self) -> float:
        return float(self.dominance.mean())

    def render(self) -> str:
        lines = [
            f"spectral energy within radius {self.radius:g} of DC "
            f"({self.dominance.shape[0]} fields)"
        ]
        for i, v in enumerate(self.dominance):
            lines.append(f"field {i:4d}: {v:.6f}")
        lines.append(f"mean: {self.mean_dominance:.6f}")
        return "\n".join(lines) + "\n"


def spectrum_report(fields: np.ndarray, out_dir=None, radius: float | None = None) -> SpectrumReport:
    """Log-magnitude spectra and the low-frequency energy fraction per field.

    fields: (H, W) or (N, H, W), square. The dominance statistic is the share
    of squared spectral magnitude inside the disk of radius H/8 around DC
    (a quarter of the Nyquist radius), the concentration the architecture's
    mode truncation banks on.
    """
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim == 2:
        fields = fields[None]
    if fields.ndim != 3:
        raise ConfigError(f"expected (N, H, W) or (H, W) fields, got shape {fields.shape}")
    n, h, w = fields.shape
    if h != w:
        raise ConfigError(f"spectrum report expects square fields, got {h}x{w}")
    if radius is None:
        radius = h / 8.0
    dominance = np.empty(n)
    logmag = np.empty((n, h, w))
    for i in range(n):
        dominance[i] = spectral_energy_fraction(fields[i], radius)
        logmag[i] = spectrum_logmag(fields[i])
    report = SpectrumReport(radius=float(radius), dominance=dominance, logmag=logmag)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_tensor(os.path.join(out_dir, "spectrum_logmag.bin"), logmag)
        with open(os.path.join(out_dir, "spectrum.txt"), "w") as fh:
            fh.write(report.render())
    return report


# ---------------------------------------------------------------------------
# Mode coverage report


def band_mask(h: int, w: int, m1: int, m2: int) -> np.ndarray:
    """Boolean half-spectrum mask of the retained corner bands.

    Rows 0..m1-1 and h-m1..h-1 of the (h, w//2+1) half-spectrum, columns
    0..m2-1: exactly the coefficients a truncated spectral layer touches.
    """
    if 2 * m1 > h or m2 > w // 2:
        raise ConfigError(f"modes ({m1}, {m2}) are inadmissible on a {h}x{w} grid")
    mask = np.zeros((h, w // 2 + 1), dtype=bool)
    mask[:m1, :m2] = True
    mask[h - m1 :, :m2] = True
    return mask


@dataclass
class ModeCoverageReport:
    grid: tuple
    entries: list = field(default_factory=list)

    def render(self) -> str:
        lines = [f"mode coverage on a {self.grid[0]}x{self.grid[1]} input grid"]
        for e in self.entries:
            lines.append(
                f"level {e['level']} block {e['block']} "
                f"(grid {e['grid'][0]}x{e['grid'][1]}): "
                f"branch_a={e['count_a']} branch_b={e['count_b']} union={e['count_union']}"
            )
        return "\n".join(lines) + "\n"


def mode_coverage_report(model: DPNOModel, grid=(64, 64), out_dir=None) -> ModeCoverageReport:
    """Per level and block, the retained-mode masks of both branches.

    Coverage depends only on the truncation sets, so parallel and serial
    variants of the same configuration report identical masks. Masks are on
    the half-spectrum of each level's grid.
    """
    cfg = model.config
    h, w = int(grid[0]), int(grid[1])
    cfg.check_grid(h, w)
    report = ModeCoverageReport(grid=(h, w))
    for lvl in range(cfg.levels + 1):
        hl, wl = h >> lvl, w >> lvl
        (a1, a2), (b1, b2) = cfg.modes_at(lvl)
        mask_a = band_mask(hl, wl, a1, a2)
        mask_b = band_mask(hl, wl, b1, b2)
        union = mask_a | mask_b
        for block in range(cfg.blocks_per_level):
            report.entries.append(
                {
                    "level": lvl,
                    "block": block,
                    "grid": (hl, wl),
                    "mask_a": mask_a,
                    "mask_b": mask_b,
                    "mask_union": union,
                    "count_a": int(mask_a.sum()),
                    "count_b": int(mask_b.sum()),
                    "count_union": int(union.sum()),
                }
            )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for e in report.entries:
            stem = f"level{e['level']}_block{e['block']}"
            write_tensor(os.path.join(out_dir, f"{stem}_a.bin"), e["mask_a"].astype(np.float64))
            write_tensor(os.path.join(out_dir, f"{stem}_b.bin"), e["mask_b"].astype(np.float64))
            write_tensor(
                os.path.join(out_dir, f"{stem}_union.bin"), e["mask_union"].astype(np.float64)
            )
        with open(os.path.join(out_dir, "coverage.txt"), "w") as fh:
            fh.write(report.render())
    return report
