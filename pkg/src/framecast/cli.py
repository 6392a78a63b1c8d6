"""Command-line entry point.

Subcommands: flow, interp, extrapolate, train, eval, synth.  Hyperparameters
come from an optional ``key = value`` config file plus identically named
command-line overrides; every effective value is echoed in a reproducibility
header on stderr.  Exit codes: 0 success, 1 usage error, 2 IO/parse error,
3 numerical failure.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import __version__, dataio
from .dataio import FormatError, SyntheticSpec
from .metrics import evaluate
from .nn.checkpoint import CheckpointError
from .refinement import Refiner, RefinerConfig, frame_refiner, refine_frame
from .training import NumericalError, TrainOptions, train
from .tvl1 import Tvl1Params, estimate_flow
from .warping import flow_between, rollout, warp_backward

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_crop(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"expected crop as HxW, got {text!r}") from None


@dataclass(frozen=True)
class _Key:
    name: str
    parse: object
    default: object
    help: str


# Config keys and their CLI override flags are bijective: each key below is
# exactly one flag (same name, dashes for underscores).
CONFIG_KEYS = [
    _Key("tau", float, 0.25, "TV-L1 dual time step"),
    _Key("lambda", float, 0.15, "TV-L1 data attachment weight"),
    _Key("theta", float, 0.3, "TV-L1 tightness parameter"),
    _Key("warps_per_level", int, 5, "TV-L1 warps per pyramid level"),
    _Key("iters_per_warp", int, 30, "TV-L1 inner iterations per warp"),
    _Key("stop_epsilon", float, 0.01, "TV-L1 mean-update early-stop threshold"),
    _Key("pyramid_factor", float, 0.5, "pyramid downscale ratio"),
    _Key("pyramid_min_dim", int, 16, "coarsest pyramid dimension"),
    _Key("median_filter", _parse_bool, True, "3x3 median filtering of the flow"),
    _Key("intensity_scale", float, 255.0, "internal intensity units per [0,1] range"),
    _Key("embed_channels", int, 32, "fusion embedding channels"),
    _Key("enc_levels", int, 3, "refinement encoder levels"),
    _Key("base_channels", int, 16, "refinement channels at full resolution"),
    _Key("attention_downsample", int, 4, "attention grid downsample factor"),
    _Key("residual_output", _parse_bool, True, "refinement predicts a correction to the warped frame"),
    _Key("swap_query_key", _parse_bool, False, "swap the fusion query/key assignment"),
    _Key("lr", float, 1e-4, "Adam learning rate"),
    _Key("batch_size", int, 8, "training batch size"),
    _Key("train_steps", int, 200, "number of training steps"),
    _Key("crop", _parse_crop, (64, 64), "training crop size HxW"),
    _Key("rot90", _parse_bool, True, "random 90-degree rotation augmentation"),
    _Key("mode", str, "interp", "training/eval triplet mode: interp or future"),
    _Key("seed", int, 0, "RNG seed for init, augmentation and synthesis"),
    _Key("format", str, "rawf32", "frame file format: pgm16 or rawf32"),
]
_KEY_BY_NAME = {k.name: k for k in CONFIG_KEYS}


def _load_config_file(path) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        name, _, raw = stripped.partition("=")
        name = name.strip()
        key = _KEY_BY_NAME.get(name)
        if key is None:
            raise UsageError(f"{path}:{lineno}: unknown config key {name!r}")
        try:
            values[name] = key.parse(raw.strip())
        except (ValueError, UsageError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {name}: {exc}") from None
    return values


def _effective_config(args) -> dict:
    cfg = {k.name: k.default for k in CONFIG_KEYS}
    if args.config:
        cfg.update(_load_config_file(args.config))
    for key in CONFIG_KEYS:
        override = getattr(args, key.name.replace("-", "_"), None)
        if override is not None:
            cfg[key.name] = override
    if cfg["format"] not in dataio.FRAME_FORMATS:
        raise UsageError(f"format must be one of {dataio.FRAME_FORMATS}, got {cfg['format']!r}")
    if cfg["mode"] not in ("interp", "future"):
        raise UsageError(f"mode must be 'interp' or 'future', got {cfg['mode']!r}")
    return cfg


def _print_header(command: str, cfg: dict, extras: dict) -> None:
    print(f"# framecast {__version__} :: {command}", file=sys.stderr)
    for name in sorted(cfg):
        print(f"# {name} = {cfg[name]}", file=sys.stderr)
    for name in sorted(extras):
        print(f"# {name} = {extras[name]}", file=sys.stderr)


def _tvl1_params(cfg: dict) -> Tvl1Params:
    return Tvl1Params(
        tau=cfg["tau"],
        lam=cfg["lambda"],
        theta=cfg["theta"],
        warps_per_level=cfg["warps_per_level"],
        iters_per_warp=cfg["iters_per_warp"],
        stop_epsilon=cfg["stop_epsilon"],
        pyramid_factor=cfg["pyramid_factor"],
        pyramid_min_dim=cfg["pyramid_min_dim"],
        median_filter=cfg["median_filter"],
        intensity_scale=cfg["intensity_scale"],
    )


def _refiner_config(cfg: dict) -> RefinerConfig:
    return RefinerConfig(
        embed_channels=cfg["embed_channels"],
        enc_levels=cfg["enc_levels"],
        base_channels=cfg["base_channels"],
        attention_downsample=cfg["attention_downsample"],
        residual_output=cfg["residual_output"],
        swap_query_key=cfg["swap_query_key"],
        init_seed=cfg["seed"],
    )


def _load_pair(path_a, path_b, fmt):
    a = dataio.load_frame(path_a, fmt)
    b = dataio.load_frame(path_b, fmt)
    if a.shape != b.shape:
        raise UsageError(f"input frames differ in size: {a.shape} vs {b.shape}")
    return a, b


def _output_path(pattern: str, index: int, alpha: float) -> str:
    if "{" in pattern:
        return pattern.format(i=index, alpha=alpha)
    root, ext = os.path.splitext(pattern)
    return f"{root}_{index:03d}{ext}"


def _load_refiner(path) -> Refiner:
    return Refiner.load(path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_flow(args, cfg) -> int:
    a, b = _load_pair(args.input_a, args.input_b, cfg["format"])
    flow = estimate_flow(a, b, _tvl1_params(cfg))
    dataio.save_flow(flow, args.output)
    return EXIT_OK


def _cmd_interp(args, cfg) -> int:
    alphas = args.alpha if args.alpha else [0.5]
    for alpha in alphas:
        if not 0.0 <= alpha <= 1.0:
            raise UsageError(f"--alpha must be in [0, 1], got {alpha}")
    a, b = _load_pair(args.input_a, args.input_b, cfg["format"])
    refiner = _load_refiner(args.checkpoint) if args.checkpoint else None
    flow = flow_between(a, b, _tvl1_params(cfg))
    for i, alpha in enumerate(alphas):
        frame = warp_backward(a, flow, alpha)
        if refiner is not None:
            frame = refine_frame(refiner, a, b, frame)
        dataio.save_frame(_output_path(args.output_pattern, i, alpha), frame, cfg["format"])
    return EXIT_OK


def _cmd_extrapolate(args, cfg) -> int:
    if args.steps < 1:
        raise UsageError(f"--steps must be >= 1, got {args.steps}")
    a, b = _load_pair(args.input_a, args.input_b, cfg["format"])
    refiner = frame_refiner(_load_refiner(args.checkpoint)) if args.checkpoint else None
    if args.reverse_time:
        if refiner is not None:
            raise UsageError("--reverse-time cannot be combined with --checkpoint")
        from .warping import extrapolate

        frames = []
        prev, cur = a, b
        for _ in range(args.steps):
            pred = extrapolate(prev, cur, 1.0, _tvl1_params(cfg), reverse_time=True)
            frames.append(pred)
            prev, cur = cur, pred
    else:
        frames = rollout(a, b, args.steps, _tvl1_params(cfg), refiner=refiner)
    for i, frame in enumerate(frames):
        dataio.save_frame(_output_path(args.output_pattern, i + 1, float(i + 1)), frame, cfg["format"])
    return EXIT_OK


def _cmd_train(args, cfg) -> int:
    seq = dataio.load_manifest(args.manifest)
    triplets = dataio.make_triplets(seq, mode=cfg["mode"])
    model = Refiner.build(_refiner_config(cfg))
    opts = TrainOptions(
        steps=cfg["train_steps"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        crop=cfg["crop"],
        rot90=cfg["rot90"],
        seed=cfg["seed"],
        mode=cfg["mode"],
    )
    history = train(model, triplets, opts, _tvl1_params(cfg))
    model.save(args.output)
    history_path = args.output + ".loss.json"
    dataio.atomic_write_bytes(history_path, json.dumps(history).encode("utf-8"))
    print(f"trained {len(history)} steps; final loss {history[-1]:.6f}" if history
          else "trained 0 steps")
    return EXIT_OK


def _cmd_eval(args, cfg) -> int:
    seq = dataio.load_manifest(args.manifest)
    triplets = dataio.make_triplets(seq, mode=cfg["mode"])
    methods = ["linear", "warp_only"]
    refiner = None
    if args.checkpoint:
        refiner = _load_refiner(args.checkpoint)
        methods.append("full")
    report = evaluate(triplets, methods, _tvl1_params(cfg), refiner=refiner)
    dataio.atomic_write_bytes(args.output, report.to_json().encode("utf-8"))
    table = report.to_table()
    dataio.atomic_write_bytes(os.path.splitext(args.output)[0] + ".txt", (table + "\n").encode("utf-8"))
    print(table)
    return EXIT_OK


def _cmd_synth(args, cfg) -> int:
    spec = SyntheticSpec(
        width=args.width,
        height=args.height,
        velocity=(args.vx, args.vy),
        texture=args.texture,
        brightness_drift=args.drift,
        growth_rate=args.growth,
        seed=cfg["seed"],
    )
    seq = dataio.generate_synthetic(spec, args.n_frames, cadence_minutes=args.cadence)
    manifest = dataio.save_manifest(args.out_dir, seq, fmt=cfg["format"])
    print(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(parser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key = value configuration file")
    for key in CONFIG_KEYS:
        flag = "--" + key.name.replace("_", "-")
        parser.add_argument(flag, dest=key.name, type=key.parse, default=None,
                            metavar="V", help=f"{key.help} (default {key.default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="framecast",
                     description="Temporal frame interpolation and extrapolation "
                                 "for single-channel imagery.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", parents=[], help="estimate optical flow between two frames")
    p.add_argument("input_a")
    p.add_argument("input_b")
    p.add_argument("output", help="output flow file (PIEH format)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("interp", help="synthesize intermediate frames")
    p.add_argument("input_a")
    p.add_argument("input_b")
    p.add_argument("output_pattern", help="output path; may contain {i} and {alpha}")
    p.add_argument("--alpha", type=float, action="append",
                   help="time fraction in [0, 1]; repeatable (default 0.5)")
    p.add_argument("--checkpoint", metavar="PATH", help="refiner checkpoint")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_interp)

    p = sub.add_parser("extrapolate", help="predict future frames by iterated rollout")
    p.add_argument("input_a")
    p.add_argument("input_b")
    p.add_argument("output_pattern", help="output path; may contain {i}")
    p.add_argument("--steps", type=int, default=1, help="number of future steps (default 1)")
    p.add_argument("--checkpoint", metavar="PATH", help="refiner checkpoint")
    p.add_argument("--reverse-time", action="store_true",
                   help="sample against the motion direction instead of continuing it")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_extrapolate)

    p = sub.add_parser("train", help="train the refinement model")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("output", help="output checkpoint path")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate interpolation methods on held-out middles")
    p.add_argument("manifest", help="dataset manifest JSON")
    p.add_argument("output", help="output report JSON path")
    p.add_argument("--checkpoint", metavar="PATH", help="refiner checkpoint enabling the 'full' row")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="materialize a synthetic frame sequence")
    p.add_argument("out_dir")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--vx", type=float, default=2.0, help="horizontal velocity, px/frame")
    p.add_argument("--vy", type=float, default=0.0, help="vertical velocity, px/frame")
    p.add_argument("--texture", default="bandlimited-noise",
                   choices=("bandlimited-noise", "gaussian-blobs", "advected-fractal"))
    p.add_argument("--drift", type=float, default=0.0, help="brightness drift per frame")
    p.add_argument("--growth", type=float, default=0.0, help="blob dilation per frame")
    p.add_argument("--n-frames", type=int, default=12)
    p.add_argument("--cadence", type=float, default=10.0, help="minutes between frames")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _effective_config(args)
        extras = {}
        for name in ("alpha", "steps", "checkpoint", "reverse_time", "width", "height",
                     "vx", "vy", "texture", "drift", "growth", "n_frames", "cadence"):
            if hasattr(args, name) and getattr(args, name) is not None:
                extras[name] = getattr(args, name)
        _print_header(args.command, cfg, extras)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
