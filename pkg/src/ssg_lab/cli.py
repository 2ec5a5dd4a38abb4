"""Command line interface.

    ssg-lab train|sample|sweep|ablate|analyze --config PATH [options]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or checkpoint failure.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import CheckpointError
from .config import load_config
from .errors import ConfigError, NumericalError
from . import harness

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(parser, with_checkpoint: bool):
    parser.add_argument("--config", required=False, default=None, help="config file path")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--omega", type=float, default=None, help="guidance scale override")
    parser.add_argument("--ratio", type=float, default=None,
                        help="swap ratio override (sets both spatial and channel)")
    parser.add_argument("--policy", default=None,
                        choices=["dissimilar", "similar", "random"],
                        help="swap policy override")
    parser.add_argument("--method", default=None,
                        choices=["none", "cfg", "ssg", "input_noise", "attn_identity"],
                        help="guidance method override")
    parser.add_argument("--steps", type=int, default=None,
                        help="train: SGD steps; otherwise: sampler steps")
    if with_checkpoint:
        parser.add_argument("--checkpoint", default=None, help="checkpoint path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssg-lab",
        description="Guided-diffusion lab: swap-guidance sampling, sweeps, and ablations")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("train", help="train the denoiser"), with_checkpoint=False)
    _add_common(sub.add_parser("sample", help="sample and compute metrics"), True)
    sweep = sub.add_parser("sweep", help="sweep guidance scale or swap ratio")
    _add_common(sweep, True)
    sweep.add_argument("--axis", required=True, choices=["omega", "ratio"])
    sweep.add_argument("--values", required=True,
                       help="comma-separated sweep values, e.g. 0,0.5,1,2,4")
    sweep.add_argument("--seeds", default=None, help="comma-separated seeds (default: 0)")
    _add_common(sub.add_parser("ablate", help="run the ablation grid"), True)
    _add_common(sub.add_parser("analyze", help="record guidance-magnitude maps"), True)
    return parser


def _config_from_args(args) -> "RunConfig":
    overrides = {}
    if args.omega is not None:
        overrides["guidance.omega"] = args.omega
    if args.ratio is not None:
        overrides["guidance.spatial_r"] = args.ratio
        overrides["guidance.channel_r"] = args.ratio
    if args.policy is not None:
        overrides["guidance.policy"] = args.policy
    if args.method is not None:
        overrides["guidance.method"] = args.method
    if args.steps is not None:
        if args.command == "train":
            overrides["train.steps"] = args.steps
        else:
            overrides["sampler.num_inference_steps"] = args.steps
    if args.command == "train" and args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "checkpoint", None):
        overrides["checkpoint"] = args.checkpoint
    return load_config(args.config, overrides)


def _require_checkpoint(config) -> str:
    if not config.checkpoint:
        raise ConfigError("checkpoint: required (pass --checkpoint or set it in the config)")
    return config.checkpoint


def _parse_float_list(raw: str):
    try:
        return [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse value list {raw!r}")


def _parse_int_list(raw: str | None):
    if not raw:
        return None
    try:
        return [int(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse seed list {raw!r}")


def run(args) -> int:
    config = _config_from_args(args)
    seed = args.seed if args.seed is not None else 0
    if args.command == "train":
        path = harness.cmd_train(config, out_dir=args.out,
                                 progress=lambda s, l: print(f"step {s}: loss {l:.4f}"))
        print(f"checkpoint written to {path}")
        return EXIT_OK
    checkpoint_path = _require_checkpoint(config)
    if args.command == "sample":
        row = harness.cmd_sample(config, checkpoint_path, seed, out_dir=args.out)
        print(f"{row['run_id']}: frechet {row['frechet']:.4f} "
              f"sliced_w2 {row['sliced_w2']:.4f} diversity {row['diversity']:.4f}")
    elif args.command == "sweep":
        rows = harness.cmd_sweep(config, checkpoint_path, args.axis,
                                 _parse_float_list(args.values),
                                 seeds=_parse_int_list(args.seeds), out_dir=args.out)
        for row in rows:
            print(f"{row['run_id']}: frechet {row['frechet']:.4f}")
    elif args.command == "ablate":
        rows = harness.cmd_ablate(config, checkpoint_path, seed, out_dir=args.out)
        for row in rows:
            print(f"{row['run_id']}: frechet {row['frechet']:.4f}")
    elif args.command == "analyze":
        records = harness.cmd_analyze(config, checkpoint_path, seed, out_dir=args.out)
        print(f"wrote {len(records)} trace records")
    else:
        raise ConfigError(f"unknown command {args.command}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CheckpointError, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
