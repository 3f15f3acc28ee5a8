"""Command-line surface: degrade cubes, train, super-resolve, evaluate,
report model complexity, and import raw data.

Exit codes are a stable scripting contract: 0 success, 2 usage or
validation failure, 3 numeric failure (diverged training).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as D
from . import model as M
from . import training as TR
from .losses import LossWeights

USAGE_EXIT = 2
NUMERIC_EXIT = 3

# Flat dotted config keys with (type, default). Training requires the
# None-valued entries to be set in the file or by flags.
CONFIG_SCHEMA: dict[str, tuple[type, object]] = {
    "model.group_size": (int, 32),
    "model.base_channels": (int, 116),
    "model.scale": (int, 4),
    "model.precision": (str, "float64"),
    "train.batch_size": (int, 4),
    "train.learning_rate": (float, 1e-3),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.patience": (int, 10),
    "train.max_epochs": (int, 100),
    "train.seed": (int, 0),
    "loss.lambda1": (float, 0.5),
    "loss.lambda2": (float, 0.03),
    "data.cube": (str, None),
    "data.dataset_kind": (str, "paviau-like"),
    "data.patch_size": (int, 144),
    "data.patch_stride": (int, 0),  # 0 means patch_size // 2
    "out.checkpoint": (str, None),
    "out.report": (str, ""),
}


class RunConfig:
    """Validated union of the config file and flag overrides."""

    def __init__(self, values: dict):
        unknown = set(values) - set(CONFIG_SCHEMA)
        if unknown:
            raise ValueError(
                f"unknown config key(s): {', '.join(sorted(unknown))}")
        self.values = {}
        for key, (typ, default) in CONFIG_SCHEMA.items():
            if values.get(key) is not None:  # JSON null means unset
                try:
                    self.values[key] = typ(values[key])
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"config key {key}: {exc}") from exc
            else:
                self.values[key] = default

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path) as f:
                values = json.load(f)
        except OSError as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise ValueError(f"config {path} must be a JSON object")
        if overrides:
            values.update(overrides)
        return cls(values)

    def require(self, key: str) -> object:
        value = self.values[key]
        if value is None or value == "":
            raise ValueError(f"config key {key} is required but missing")
        return value

    def model_config(self) -> M.DsdcnConfig:
        return M.DsdcnConfig(group_size=self.values["model.group_size"],
                             base_channels=self.values["model.base_channels"],
                             scale=self.values["model.scale"],
                             precision=self.values["model.precision"])

    def train_config(self) -> TR.TrainConfig:
        return TR.TrainConfig(
            batch_size=self.values["train.batch_size"],
            learning_rate=self.values["train.learning_rate"],
            beta1=self.values["train.beta1"],
            beta2=self.values["train.beta2"],
            eps=self.values["train.eps"],
            patience=self.values["train.patience"],
            max_epochs=self.values["train.max_epochs"],
            seed=self.values["train.seed"],
            weights=LossWeights(lambda1=self.values["loss.lambda1"],
                                lambda2=self.values["loss.lambda2"]))

    def dump(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.values, f, indent=2, sort_keys=True)
            f.write("\n")


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    cube = D.load_cube(args.input)
    out = D.area_downsample(cube, args.scale)
    D.save_cube(out, args.output)
    print(f"{cube.h}x{cube.w}x{cube.b} -> {out.h}x{out.w}x{out.b} "
          f"(scale {args.scale})")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _parse_overrides(args.set or []))
    if args.seed is not None:
        cfg.values["train.seed"] = args.seed
    if args.dump_config:
        cfg.dump(args.dump_config)
    cube_path = cfg.require("data.cube")
    checkpoint = cfg.require("out.checkpoint")
    stride = cfg.values["data.patch_stride"] or None
    report = TR.train(cfg.model_config(), cube_path,
                      cfg.values["data.dataset_kind"], cfg.train_config(),
                      checkpoint,
                      patch_size=cfg.values["data.patch_size"],
                      patch_stride=stride,
                      report_path=cfg.values["out.report"] or None)
    print(f"stopped at epoch {report.stopped_epoch}; "
          f"best epoch {report.best_epoch} "
          f"(val MPSNR {report.best_val_mpsnr:.3f} dB); "
          f"checkpoint: {report.checkpoint_path}")
    return 0


def cmd_sr(args) -> int:
    params, config = M.load_checkpoint(args.checkpoint)
    lr = D.load_cube(args.input)
    norm, record = D.normalize(lr)
    sr = TR.super_resolve_cube(params, norm)
    out = D.denormalize(sr, record)
    out = D.HsiCube(out.data.astype(lr.data.dtype, copy=False))
    D.save_cube(out, args.output)
    print(f"{lr.h}x{lr.w}x{lr.b} -> {out.h}x{out.w}x{out.b} "
          f"(scale {config.scale})")
    return 0


def cmd_evaluate(args) -> int:
    report = TR.evaluate(args.checkpoint, args.truth, args.scale)
    print(report.to_json())
    return 0


def cmd_params(args) -> int:
    cfg = RunConfig.load(args.config)
    params = M.init_params(cfg.model_config(), seed=0)
    breakdown = M.param_breakdown(params)
    total = M.param_count(params)
    for stage, count in breakdown.items():
        print(f"{stage:>12}: {count:>10,}")
    print(f"{'total':>12}: {total:>10,}")
    return 0


def cmd_import(args) -> int:
    with open(args.dims) as f:
        meta = json.load(f)
    for key in ("h", "w", "b"):
        if key not in meta:
            raise ValueError(f"dims descriptor missing key {key!r}")
    dtype = {"f32": np.float32, "f64": np.float64}.get(
        meta.get("dtype", "f64"))
    if dtype is None:
        raise ValueError(f"dims descriptor dtype must be f32 or f64, "
                         f"got {meta.get('dtype')!r}")
    raw = np.fromfile(args.raw, dtype=dtype)
    expected = meta["h"] * meta["w"] * meta["b"]
    if raw.size != expected:
        raise ValueError(
            f"raw file holds {raw.size} values, dims say {expected}")
    cube = D.HsiCube(raw.reshape(meta["h"], meta["w"], meta["b"]))
    D.save_cube(cube, args.output)
    print(f"imported {cube.h}x{cube.w}x{cube.b} cube")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsdcn",
        description="Hyperspectral super-resolution: data prep, training, "
                    "inference, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="area-downsample a cube")
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=int, required=True, choices=(2, 4, 8))
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--dump-config", metavar="PATH",
                   help="write the effective merged config before training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve a low-resolution cube")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("evaluate",
                       help="degrade a truth cube, reconstruct, and score")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--scale", type=int, required=True, choices=(2, 4, 8))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", help="print the learnable parameter count")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("import",
                       help="convert flat binary + JSON dims to HSIC")
    p.add_argument("--raw", required=True)
    p.add_argument("--dims", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_import)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TR.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
