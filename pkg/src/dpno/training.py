"""Training loop, metric history, and checkpoint persistence.

Determinism is the organizing constraint. Epoch shuffles are pure functions
of (seed, epoch) rather than a mutable stream, metric rows hold full-precision
reprs, and wall-clock numbers live in a sidecar file so everything else is
byte-identical across reruns. Checkpoints are written to a temporary
directory and renamed into place, which lets a killed run resume from the
last complete one and land on exactly the files the uninterrupted run would
have produced.
"""

from __future__ import annotations

import ctypes
import math
import os
import shutil
import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .container import read_kv, read_tensor, write_kv, write_tensor
from .errors import ConfigError, DataError, NumericError
from .layers import mse_loss, relative_l2, relative_l2_loss
from .model import DPNOConfig, DPNOModel, model_init
from .optim import AdamState, adam_step

__all__ = [
    "TrainConfig",
    "MetricRecord",
    "TrainState",
    "Checkpoint",
    "enable_heap_reuse",
    "evaluate",
    "train_run",
    "checkpoint_save",
    "checkpoint_load",
    "latest_checkpoint",
    "read_metrics",
]

LOSSES = ("mse", "relative_l2")
PRECISIONS = ("single", "double")


def enable_heap_reuse() -> bool:
    """Raise glibc's mmap threshold so large step temporaries reuse heap pages.

    The activation buffers here are tens of MB; under the default allocator
    every step would fault in fresh mmapped pages and return them on free.
    Best effort: returns False on non-glibc platforms.
    """
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        m_mmap_threshold = -3
        return bool(libc.mallopt(m_mmap_threshold, 1 << 30))
    except (OSError, AttributeError):
        return False


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings.

    epochs = 0 is allowed and produces only the initial evaluation record,
    which gives protocols a cheap way to snapshot an untrained model.
    checkpoint_every = 0 writes only the final checkpoint. precision chooses
    the compute dtype; parameters and optimizer state stay float64 either way.
    """

    epochs: int = 500
    batch_size: int = 20
    lr: float = 1e-3
    weight_decay: float = 1e-4
    seed: int = 0
    eval_every: int = 1
    checkpoint_every: int = 0
    loss: str = "mse"
    precision: str = "single"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")

    @property
    def compute_dtype(self):
        return np.float32 if self.precision == "single" else np.float64


@dataclass
class MetricRecord:
    epoch: int
    train_loss: float
    test_mse: float
    test_rel_l2: float
    wall_seconds: float


@dataclass
class TrainState:
    model: DPNOModel
    adam: AdamState
    epoch: int
    records: list


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    # pure in (seed, epoch) so a resumed run replays the identical shuffles
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)))
    return rng.permutation(n)


def evaluate(model, inputs: np.ndarray, targets: np.ndarray, batch_size: int = 20, target_scale: float = 1.0):
    """Mean squared error and mean per-sample relative L2 over a test set.

    Predictions are upcast to float64 and divided by target_scale alongside
    the stored targets, so the reported errors are in physical units no matter
    how training scaled the fields. Per-sample outputs do not depend on how
    the set is batched, so any batch_size gives the same numbers.
    """
    n = inputs.shape[0]
    if n == 0:
        return float("nan"), float("nan")
    scale = float(target_scale)
    mse_sum = 0.0
    rel_sum = 0.0
    for s in range(0, n, batch_size):
        xb = inputs[s : s + batch_size]
        yb = np.asarray(targets[s : s + batch_size], dtype=np.float64) / scale
        pred = np.asarray(model.apply(xb), dtype=np.float64) / scale
        bsz = xb.shape[0]
        loss, _ = mse_loss(pred, yb)
        mse_sum += loss * bsz
        rel_sum += relative_l2(pred, yb) * bsz
    return mse_sum / n, rel_sum / n


def _param_norm(model: DPNOModel) -> float:
    return math.sqrt(sum(float(np.sum(p.real_view() ** 2)) for p in model.params))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_metrics(path, records) -> None:
    lines = ["epoch,train_loss,test_mse,test_rel_l2"]
    for r in records:
        lines.append(f"{r.epoch},{_fmt(r.train_loss)},{_fmt(r.test_mse)},{_fmt(r.test_rel_l2)}")
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_metrics(path):
    if not os.path.isfile(path):
        raise DataError(f"no metric history at {path}")
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "epoch,train_loss,test_mse,test_rel_l2":
            raise DataError(f"unexpected metric header {header!r} in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ep, tl, mse, rl = line.split(",")
            records.append(MetricRecord(int(ep), float(tl), float(mse), float(rl), 0.0))
    return records


def _write_timings(path, records) -> None:
    lines = ["epoch,wall_seconds"]
    for r in records:
        lines.append(f"{r.epoch},{r.wall_seconds:.3f}")
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class Checkpoint:
    """Everything needed to reconstruct a trained model and continue a run."""

    model_config: DPNOConfig
    train_config: TrainConfig
    variant: str
    epoch: int
    adam_step_count: int
    params: dict
    adam_m: dict
    adam_v: dict
    norm_stats: dict
    data_meta: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def build_model(self) -> DPNOModel:
        model = model_init(self.model_config, variant=self.variant)
        model.compute_dtype = self.train_config.compute_dtype
        model.load_state(self.params)
        return model

    def build_adam(self) -> AdamState:
        state = AdamState.init(
            [],
            lr=self.train_config.lr,
            weight_decay=self.train_config.weight_decay,
        )
        state.m = {k: v.copy() for k, v in self.adam_m.items()}
        state.v = {k: v.copy() for k, v in self.adam_v.items()}
        state.step = self.adam_step_count
        return state


_MODES_FIELDS = ("modes_a", "modes_b")
_BOOL_FIELDS = ("use_skip", "final_block_activation")


def _encode_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(int(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _decode_field(name: str, text: str, py_type):
    # dataclass field types arrive as strings under deferred annotations
    type_name = py_type if isinstance(py_type, str) else getattr(py_type, "__name__", "")
    if name in _MODES_FIELDS:
        parts = text.split(",")
        if len(parts) != 2:
            raise ConfigError(f"field {name} expects two comma-separated mode counts, got {text!r}")
        return (int(parts[0]), int(parts[1]))
    if type_name == "bool" or name in _BOOL_FIELDS:
        if text not in ("true", "false"):
            raise ConfigError(f"field {name} expects true/false, got {text!r}")
        return text == "true"
    if type_name == "int":
        return int(text)
    if type_name == "float":
        return float(text)
    return text


def _config_from_kv(cls, kv: dict, prefix: str):
    kwargs = {}
    for f in dc_fields(cls):
        key = prefix + f.name
        if key not in kv:
            raise ConfigError(f"checkpoint manifest is missing field {key}")
        try:
            kwargs[f.name] = _decode_field(f.name, kv[key], f.type)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {kv[key]!r}") from exc
    return cls(**kwargs)


def checkpoint_save(
    path,
    model: DPNOModel,
    adam: AdamState,
    train_config: TrainConfig,
    epoch: int,
    norm_stats: dict,
    data_meta: dict | None = None,
    records: list | None = None,
) -> None:
    """Write a complete checkpoint directory atomically (tmp dir + rename)."""
    path = str(path)
    tmp = path + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(os.path.join(tmp, "params"))
    os.makedirs(os.path.join(tmp, "adam"))

    manifest: dict = {"format_version": 1, "variant": model.variant, "epoch": epoch}
    manifest["adam_step"] = adam.step
    manifest["metrics_file"] = "metrics.csv"
    for f in dc_fields(DPNOConfig):
        manifest[f"model.{f.name}"] = _encode_value(getattr(model.config, f.name))
    for f in dc_fields(TrainConfig):
        manifest[f"train.{f.name}"] = _encode_value(getattr(train_config, f.name))
    for key in sorted(data_meta or {}):
        manifest[f"data.{key}"] = data_meta[key]
    manifest["norm.target_scale"] = _fmt(norm_stats["target_scale"])
    manifest["norm.input_mean"] = ",".join(_fmt(v) for v in norm_stats["input_mean"])
    manifest["norm.input_std"] = ",".join(_fmt(v) for v in norm_stats["input_std"])
    write_kv(os.path.join(tmp, "manifest.txt"), manifest)

    for p in model.params:
        write_tensor(os.path.join(tmp, "params", p.name + ".bin"), p.value)
        write_tensor(os.path.join(tmp, "adam", "m." + p.name + ".bin"), adam.m[p.name])
        write_tensor(os.path.join(tmp, "adam", "v." + p.name + ".bin"), adam.v[p.name])
    write_metrics(os.path.join(tmp, "metrics.csv"), records or [])

    if os.path.exists(path):
        shutil.rmtree(path)
    os.rename(tmp, path)


def checkpoint_load(path) -> Checkpoint:
    path = str(path)
    kv = read_kv(os.path.join(path, "manifest.txt"))
    if kv.get("format_version") != "1":
        raise DataError(f"unsupported checkpoint format {kv.get('format_version')!r} at {path}")
    model_config = _config_from_kv(DPNOConfig, kv, "model.")
    train_config = _config_from_kv(TrainConfig, kv, "train.")
    variant = kv.get("variant", "parallel")
    epoch = int(kv["epoch"])
    adam_step_count = int(kv["adam_step"])
    norm_stats = {
        "target_scale": float(kv["norm.target_scale"]),
        "input_mean": np.array([float(v) for v in kv["norm.input_mean"].split(",")]),
        "input_std": np.array([float(v) for v in kv["norm.input_std"].split(",")]),
    }
    data_meta = {k[len("data.") :]: v for k, v in kv.items() if k.startswith("data.")}

    params = {}
    pdir = os.path.join(path, "params")
    for fname in sorted(os.listdir(pdir)):
        if fname.endswith(".bin"):
            params[fname[:-4]] = read_tensor(os.path.join(pdir, fname))
    adam_m, adam_v = {}, {}
    adir = os.path.join(path, "adam")
    for fname in sorted(os.listdir(adir)):
        if not fname.endswith(".bin"):
            continue
        stem = fname[:-4]
        if stem.startswith("m."):
            adam_m[stem[2:]] = read_tensor(os.path.join(adir, fname))
        elif stem.startswith("v."):
            adam_v[stem[2:]] = read_tensor(os.path.join(adir, fname))
    records = read_metrics(os.path.join(path, kv.get("metrics_file", "metrics.csv")))
    return Checkpoint(
        model_config=model_config,
        train_config=train_config,
        variant=variant,
        epoch=epoch,
        adam_step_count=adam_step_count,
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        norm_stats=norm_stats,
        data_meta=data_meta,
        records=records,
    )


def latest_checkpoint(out_dir):
    """Most recent complete checkpoint directory under out_dir, or None."""
    root = os.path.join(str(out_dir), "checkpoints")
    if not os.path.isdir(root):
        return None
    best, best_epoch = None, -1
    for name in os.listdir(root):
        full = os.path.join(root, name)
        if not name.startswith("epoch_") or name.endswith(".tmp") or not os.path.isdir(full):
            continue
        if not os.path.isfile(os.path.join(full, "manifest.txt")):
            continue
        try:
            ep = int(name[len("epoch_") :])
        except ValueError:
            continue
        if ep > best_epoch:
            best, best_epoch = full, ep
    return best


def _check_resume_matches(ck: Checkpoint, model_config: DPNOConfig, train_config: TrainConfig, variant: str):
    for f in dc_fields(DPNOConfig):
        if getattr(ck.model_config, f.name) != getattr(model_config, f.name):
            raise ConfigError(
                f"resume config mismatch on model.{f.name}: checkpoint has "
                f"{getattr(ck.model_config, f.name)!r}, requested {getattr(model_config, f.name)!r}"
            )
    for f in dc_fields(TrainConfig):
        # epochs is the run length, not part of the trajectory: shuffles are
        # keyed by epoch index, so extending a run equals a longer fresh run
        if f.name == "epochs":
            continue
        if getattr(ck.train_config, f.name) != getattr(train_config, f.name):
            raise ConfigError(
                f"resume config mismatch on train.{f.name}: checkpoint has "
                f"{getattr(ck.train_config, f.name)!r}, requested {getattr(train_config, f.name)!r}"
            )
    if ck.variant != variant:
        raise ConfigError(f"resume variant mismatch: checkpoint {ck.variant!r}, requested {variant!r}")


# ---------------------------------------------------------------------------
# The loop


def train_run(
    model_config: DPNOConfig,
    data,
    train_config: TrainConfig,
    out_dir=None,
    resume: bool = False,
    variant: str = "parallel",
) -> TrainState:
    """Shuffled mini-batch Adam training, deterministic in the config seeds.

    Writes metrics.csv, a timings.csv sidecar, and checkpoint directories
    under out_dir when given; the final checkpoint is always written there.
    With resume=True the latest complete checkpoint under out_dir (same
    configs required) seeds the loop, and because shuffles are derived per
    epoch the finished run is indistinguishable from an uninterrupted one.
    """
    enable_heap_reuse()
    tc = train_config
    n_train = data.n_train
    if tc.batch_size > n_train:
        raise ConfigError(f"batch_size {tc.batch_size} exceeds the {n_train}-sample train split")
    h, w = data.inputs.shape[-2], data.inputs.shape[-1]
    model_config.check_grid(h, w)
    if data.inputs.shape[1] != model_config.in_channels:
        raise DataError(
            f"dataset provides {data.inputs.shape[1]} input channels, "
            f"model expects {model_config.in_channels}"
        )
    if data.targets.shape[1] != model_config.out_channels:
        raise DataError(
            f"dataset provides {data.targets.shape[1]} target channels, "
            f"model expects {model_config.out_channels}"
        )

    cdtype = tc.compute_dtype
    x_train, y_train = data.train_arrays()
    x_test, y_test = data.test_arrays()
    xtr = np.ascontiguousarray(x_train, dtype=cdtype)
    ytr = np.ascontiguousarray(y_train, dtype=cdtype)
    xte = np.ascontiguousarray(x_test, dtype=cdtype)

    model = model_init(model_config, variant=variant)
    model.compute_dtype = cdtype
    adam = AdamState.init(model.params, lr=tc.lr, weight_decay=tc.weight_decay)
    loss_fn = mse_loss if tc.loss == "mse" else relative_l2_loss

    records: list[MetricRecord] = []
    start_epoch = 0
    if resume and out_dir is not None:
        latest = latest_checkpoint(out_dir)
        if latest is not None:
            ck = checkpoint_load(latest)
            _check_resume_matches(ck, model_config, tc, variant)
            if ck.epoch > tc.epochs:
                raise ConfigError(
                    f"checkpoint at epoch {ck.epoch} is already past the "
                    f"requested {tc.epochs} epochs"
                )
            model.load_state(ck.params)
            adam = ck.build_adam()
            records = ck.records
            start_epoch = ck.epoch

    t0 = time.perf_counter()
    norm_stats = data.norm_stats
    data_meta = {"task": data.task, "resolution": data.grid.height}

    def flush():
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        write_metrics(os.path.join(out_dir, "metrics.csv"), records)
        _write_timings(os.path.join(out_dir, "timings.csv"), records)

    def save_checkpoint(epoch):
        if out_dir is None:
            return
        dest = os.path.join(out_dir, "checkpoints", f"epoch_{epoch:05d}")
        os.makedirs(os.path.dirname(dest), exist_ok=True)
        checkpoint_save(dest, model, adam, tc, epoch, norm_stats, data_meta, records)

    target_scale = float(norm_stats["target_scale"])
    if start_epoch == 0 and not any(r.epoch == 0 for r in records):
        mse0, rel0 = evaluate(model, xte, y_test, tc.batch_size, target_scale)
        records.append(MetricRecord(0, float("nan"), mse0, rel0, time.perf_counter() - t0))
        flush()

    for epoch in range(start_epoch + 1, tc.epochs + 1):
        perm = _epoch_permutation(tc.seed, epoch, n_train)
        loss_sum = 0.0
        for bi, s in enumerate(range(0, n_train, tc.batch_size)):
            idx = perm[s : s + tc.batch_size]
            xb = xtr[idx]
            yb = ytr[idx]
            model.zero_grads()
            pred, backward = model.forward(xb)
            loss, loss_back = loss_fn(pred, yb)
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {bi} "
                    f"(parameter norm {_param_norm(model):.6e}); "
                    f"lower the learning rate or inspect the data"
                )
            backward(loss_back(1.0))
            adam_step(model.params, adam)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n_train

        if epoch % tc.eval_every == 0 or epoch == tc.epochs:
            mse, rel = evaluate(model, xte, y_test, tc.batch_size, target_scale)
            records.append(MetricRecord(epoch, train_loss, mse, rel, time.perf_counter() - t0))
            flush()
        if tc.checkpoint_every > 0 and epoch % tc.checkpoint_every == 0 and epoch < tc.epochs:
            save_checkpoint(epoch)

    flush()
    save_checkpoint(tc.epochs)
    return TrainState(model=model, adam=adam, epoch=tc.epochs, records=records)
