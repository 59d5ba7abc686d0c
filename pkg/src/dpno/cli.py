"""Command line front end.

Subcommands: gen-data, train, eval, superres, ablate, spectrum. Every run
writes a resolved_config.txt into its output directory that parses back
through the same loader, so a run is reconstructable from its artifacts
alone. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .container import read_kv, write_kv
from .datagen import (
    darcy_residual,
    darcy_sample_replay,
    dataset_build,
    load_dataset,
    normalize_with,
)
from .errors import ConfigError, DataError, DpnoError
from .model import DPNOConfig, VARIANTS
from .protocols import _cell_metrics, ablation_run, spectrum_report, zero_shot_eval
from .training import (
    TrainConfig,
    checkpoint_load,
    enable_heap_reuse,
    train_run,
)

# Canonical key table; order here is the order resolved configs are written in.
_CONFIG_DEFAULTS: dict[str, str] = {
    "data.task": "darcy",
    "data.n_train": "400",
    "data.n_test": "100",
    "data.resolution": "64",
    "data.seed": "0",
    "data.tau": "3.0",
    "data.alpha": "2.0",
    "data.oracle_grid": "auto",
    "data.nu": "0.001",
    "data.dt": "0.001",
    "data.ns_mode": "window",
    "model.in_channels": "auto",
    "model.out_channels": "auto",
    "model.width": "32",
    "model.levels": "2",
    "model.blocks_per_level": "2",
    "model.modes_a": "16,16",
    "model.modes_b": "auto",
    "model.use_skip": "true",
    "model.final_block_activation": "false",
    "model.seed": "0",
    "train.epochs": "500",
    "train.batch_size": "20",
    "train.lr": "0.001",
    "train.weight_decay": "0.0001",
    "train.seed": "0",
    "train.eval_every": "1",
    "train.checkpoint_every": "0",
    "train.loss": "mse",
    "train.precision": "single",
    "run.command": "",
    "run.variant": "parallel",
    "run.data": "",
    "run.checkpoint": "",
    "run.checkpoints": "",
    "run.datasets": "",
    "run.seeds": "3",
}


def _load_config(path, prefixes=(), extra_keys=()) -> dict:
    """Defaults for the given sections plus named keys, overridden by a file."""
    cfg = {
        k: v
        for k, v in _CONFIG_DEFAULTS.items()
        if k.split(".", 1)[0] in prefixes or k in extra_keys
    }
    if path is None:
        return cfg
    try:
        fields = read_kv(path)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    for key, val in fields.items():
        if key not in _CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        if key not in cfg:
            raise ConfigError(f"config key {key!r} is not used by this command")
        cfg[key] = val
    return cfg


def _write_resolved(out_dir, cfg: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    ordered = {k: cfg[k] for k in _CONFIG_DEFAULTS if k in cfg}
    write_kv(os.path.join(out_dir, "resolved_config.txt"), ordered)


def _cfg_int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from None


def _cfg_float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from None


def _cfg_bool(cfg, key) -> bool:
    val = cfg[key]
    if val not in ("true", "false"):
        raise ConfigError(f"{key} must be 'true' or 'false', got {val!r}")
    return val == "true"


def _cfg_modes(cfg, key) -> tuple:
    parts = [p.strip() for p in cfg[key].split(",")]
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key} must be 'm' or 'm1,m2', got {cfg[key]!r}") from None
    if len(vals) == 1:
        return (vals[0], vals[0])
    if len(vals) == 2:
        return vals
    raise ConfigError(f"{key} must hold one or two integers, got {cfg[key]!r}")


def _model_config(cfg, dataset) -> DPNOConfig:
    if cfg["model.in_channels"] == "auto":
        in_c = dataset.inputs.shape[1]
    else:
        in_c = _cfg_int(cfg, "model.in_channels")
    if cfg["model.out_channels"] == "auto":
        out_c = dataset.targets.shape[1]
    else:
        out_c = _cfg_int(cfg, "model.out_channels")
    modes_b = None if cfg["model.modes_b"] == "auto" else _cfg_modes(cfg, "model.modes_b")
    mc = DPNOConfig(
        in_channels=in_c,
        out_channels=out_c,
        width=_cfg_int(cfg, "model.width"),
        levels=_cfg_int(cfg, "model.levels"),
        blocks_per_level=_cfg_int(cfg, "model.blocks_per_level"),
        modes_a=_cfg_modes(cfg, "model.modes_a"),
        modes_b=modes_b,
        use_skip=_cfg_bool(cfg, "model.use_skip"),
        final_block_activation=_cfg_bool(cfg, "model.final_block_activation"),
        seed=_cfg_int(cfg, "model.seed"),
    )
    # freeze the inferred values so the resolved config stands on its own
    cfg["model.in_channels"] = str(mc.in_channels)
    cfg["model.out_channels"] = str(mc.out_channels)
    cfg["model.modes_a"] = f"{mc.modes_a[0]},{mc.modes_a[1]}"
    cfg["model.modes_b"] = f"{mc.modes_b[0]},{mc.modes_b[1]}"
    return mc


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(
        epochs=_cfg_int(cfg, "train.epochs"),
        batch_size=_cfg_int(cfg, "train.batch_size"),
        lr=_cfg_float(cfg, "train.lr"),
        weight_decay=_cfg_float(cfg, "train.weight_decay"),
        seed=_cfg_int(cfg, "train.seed"),
        eval_every=_cfg_int(cfg, "train.eval_every"),
        checkpoint_every=_cfg_int(cfg, "train.checkpoint_every"),
        loss=cfg["train.loss"],
        precision=cfg["train.precision"],
    )


def cmd_gen_data(args) -> int:
    cfg = _load_config(None, prefixes=("data",), extra_keys=("run.command",))
    cfg["run.command"] = "gen-data"
    cfg["data.task"] = args.task
    cfg["data.n_train"] = str(args.n_train)
    cfg["data.n_test"] = str(args.n_test)
    cfg["data.resolution"] = str(args.resolution)
    cfg["data.seed"] = str(args.seed)
    cfg["data.tau"] = repr(args.tau)
    cfg["data.alpha"] = repr(args.alpha)
    cfg["data.nu"] = repr(args.nu)
    cfg["data.dt"] = repr(args.dt)
    cfg["data.ns_mode"] = args.ns_mode
    if args.oracle_grid is not None:
        cfg["data.oracle_grid"] = str(args.oracle_grid)

    ds = dataset_build(
        task=args.task,
        n_train=args.n_train,
        n_test=args.n_test,
        resolution=args.resolution,
        seed=args.seed,
        tau=args.tau,
        alpha=args.alpha,
        oracle_grid=args.oracle_grid,
        nu=args.nu,
        dt=args.dt,
        ns_mode=args.ns_mode,
    )
    ds.save(args.out)
    if args.task == "darcy":
        cfg["data.oracle_grid"] = str(ds.meta["oracle_grid"])
    _write_resolved(args.out, cfg)

    print(f"wrote {ds.task} dataset to {args.out}")
    print(f"samples: {ds.n_train} train + {ds.n_test} test at {args.resolution}x{args.resolution}")
    print(f"inputs {ds.inputs.shape}, targets {ds.targets.shape}")
    mean = np.array2string(ds.norm_stats["input_mean"], precision=4)
    std = np.array2string(ds.norm_stats["input_std"], precision=4)
    print(f"input mean {mean}")
    print(f"input std  {std}")
    print(f"target scale {ds.norm_stats['target_scale']:g}")

    if args.task == "darcy":
        a_fine, u_fine = darcy_sample_replay(
            args.seed, 0, args.resolution, args.tau, args.alpha, args.oracle_grid
        )
        res = darcy_residual(a_fine, u_fine)
        print(f"oracle residual (sample 0, fine grid): {res:.3e}")
    else:
        snaps = ds.inputs[0, :10] if args.ns_mode == "window" else ds.inputs[0, :1]
        drift = float(np.abs(snaps.mean(axis=(1, 2))).max())
        print(f"oracle zero-mode drift (sample 0): {drift:.3e}")

    if args.resolution % 4 != 0:
        print(
            f"warning: resolution {args.resolution} is not divisible by 4; "
            "the default two-level model will reject this grid at train time"
        )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(
        args.config,
        prefixes=("model", "train"),
        extra_keys=("run.command", "run.variant", "run.data"),
    )
    cfg["run.command"] = "train"
    cfg["run.data"] = args.data
    if args.variant is not None:
        cfg["run.variant"] = args.variant
    variant = cfg["run.variant"]
    if variant not in VARIANTS:
        raise ConfigError(f"run.variant must be one of {VARIANTS}, got {variant!r}")

    ds = load_dataset(args.data)
    mc = _model_config(cfg, ds)
    tc = _train_config(cfg)
    # admissibility first, so a doomed run leaves no artifacts behind
    mc.check_grid(ds.grid.height, ds.grid.width)
    _write_resolved(args.out, cfg)

    state = train_run(mc, ds, tc, out_dir=args.out, resume=args.resume, variant=variant)
    last = state.records[-1]
    print(f"trained {variant} variant for {state.epoch} epochs on {ds.task}")
    print(f"final test mse {last.test_mse:.6e}  rel_l2 {last.test_rel_l2:.6e}")
    print(f"artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    ck = checkpoint_load(args.checkpoint)
    ds = load_dataset(args.data)
    model = ck.build_model()
    cell = _cell_metrics(ck, model, ds)

    lines = [
        f"checkpoint {args.checkpoint} (epoch {ck.epoch}, {ck.variant})",
        f"dataset {args.data}: {ds.task}, {ds.n_test} test samples at "
        f"{ds.grid.height}x{ds.grid.width}",
        f"test mse {cell['mse']:.6e}  rel_l2 {cell['rel_l2']:.6e}",
    ]
    table = "\n".join(lines) + "\n"
    print(table, end="")

    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.txt"), "w") as fh:
            fh.write(table)
        with open(os.path.join(args.out, "eval.csv"), "w") as fh:
            fh.write("mse,rel_l2\n")
            fh.write(f"{cell['mse']!r},{cell['rel_l2']!r}\n")
        cfg = _load_config(None, extra_keys=("run.command", "run.checkpoint", "run.data"))
        cfg["run.command"] = "eval"
        cfg["run.checkpoint"] = args.checkpoint
        cfg["run.data"] = args.data
        _write_resolved(args.out, cfg)
    return 0


def cmd_superres(args) -> int:
    datasets = [load_dataset(p) for p in args.datasets]
    result = zero_shot_eval(args.checkpoints, datasets, out_dir=args.out)
    print(result.render(), end="")
    if args.out is not None:
        cfg = _load_config(None, extra_keys=("run.command", "run.checkpoints", "run.datasets"))
        cfg["run.command"] = "superres"
        cfg["run.checkpoints"] = ",".join(args.checkpoints)
        cfg["run.datasets"] = ",".join(args.datasets)
        _write_resolved(args.out, cfg)
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(
        args.config,
        prefixes=("model", "train"),
        extra_keys=("run.command", "run.data", "run.seeds"),
    )
    cfg["run.command"] = "ablate"
    cfg["run.data"] = args.data
    cfg["run.seeds"] = str(args.seeds)
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")

    ds = load_dataset(args.data)
    mc = _model_config(cfg, ds)
    tc = _train_config(cfg)
    mc.check_grid(ds.grid.height, ds.grid.width)
    if args.out is not None:
        _write_resolved(args.out, cfg)

    seeds = tuple(range(tc.seed, tc.seed + args.seeds))
    result = ablation_run(ds, mc, tc, seeds=seeds, out_dir=args.out)
    print(result.render(), end="")
    return 0


def cmd_spectrum(args) -> int:
    ds = load_dataset(args.data)
    scale = ds.norm_stats["target_scale"]
    if args.checkpoint is not None:
        ck = checkpoint_load(args.checkpoint)
        model = ck.build_model()
        ck.model_config.check_grid(ds.grid.height, ds.grid.width)
        x = normalize_with(ds.inputs[ds.test_indices], ck.norm_stats)
        x = np.ascontiguousarray(x, dtype=model.compute_dtype)
        preds = []
        bs = ck.train_config.batch_size
        for start in range(0, x.shape[0], bs):
            preds.append(model.apply(x[start : start + bs]).astype(np.float64))
        fields = np.concatenate(preds) / ck.norm_stats["target_scale"]
        source = f"predictions on {x.shape[0]} test samples"
    else:
        fields = ds.targets / scale
        source = f"targets of all {fields.shape[0]} samples"
    n, c, h, w = fields.shape
    report = spectrum_report(fields.reshape(n * c, h, w), out_dir=args.out)
    print(f"spectrum over {source} ({n * c} fields)")
    print(f"low-frequency dominance (radius {report.radius:g}): mean {report.mean_dominance:.4f}, "
          f"min {report.dominance.min():.4f}")
    if args.out is not None:
        cfg = _load_config(None, extra_keys=("run.command", "run.data", "run.checkpoint"))
        cfg["run.command"] = "spectrum"
        cfg["run.data"] = args.data
        if args.checkpoint is not None:
            cfg["run.checkpoint"] = args.checkpoint
        _write_resolved(args.out, cfg)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpno", description="spectral neural operator: data, training, evaluation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--task", required=True, choices=("darcy", "ns"))
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-test", type=int, required=True)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=3.0, help="GRF inverse length scale")
    p.add_argument("--alpha", type=float, default=2.0, help="GRF spectral decay exponent")
    p.add_argument("--oracle-grid", type=int, default=None,
                   help="fine solve grid for darcy (default 2*resolution-1)")
    p.add_argument("--nu", type=float, default=1e-3, help="ns viscosity")
    p.add_argument("--dt", type=float, default=1e-3, help="ns solver step")
    p.add_argument("--ns-mode", choices=("window", "step"), default="window")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--config", default=None, help="key=value file with model./train. entries")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--resume", action="store_true",
                   help="continue from the newest checkpoint in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("superres", help="zero-shot resolution-transfer matrix")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("ablate", help="paired parallel-vs-serial training runs")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, starting at train.seed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("spectrum", help="low-frequency dominance of targets or predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None,
                   help="report on this checkpoint's test-split predictions instead of targets")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectrum)

    return parser


def main(argv=None) -> int:
    enable_heap_reuse()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DpnoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
