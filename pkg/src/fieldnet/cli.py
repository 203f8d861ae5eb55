"""Command-line entry point.

Subcommands: ``synth`` (progressive frames to a field stream), ``train``,
``deinterlace``, ``eval``, and ``bench-attn``.  Every run takes ``--seed``,
``--workers`` and repeatable ``--set key=value`` overrides, and writes an
effective-config sidecar next to its primary output so the run can be
reproduced.  Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical abort.
"""

import argparse
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .backend import active_backend
from .baselines import BASELINE_NAMES, deinterlace_baseline
from .bench import DEFAULT_SIZES, bench_attention, write_bench_csv
from .errors import DataError, FieldnetError, NumericalAbort, UsageError
from .evaluate import (baseline_estimator, eval_clip, ground_truth_estimator,
                       model_estimator)
from .fields import make_window, synth_interlaced
from .model import (NetworkConfig, deinterlace_frame, init_weights,
                    load_weights, save_weights)
from .ppm import frame_name, read_clip, read_field_stream, write_field_stream, \
    write_ppm
from .train import TrainConfig, train_loop, write_loss_csv

EVAL_METHODS = BASELINE_NAMES + ("model", "gt")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad arguments; the contract reserves 2 for data
    # errors and 1 for usage errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_overrides(pairs):
    """['a=1', 'b=x'] -> {'a': '1', 'b': 'x'}; malformed pairs are usage errors."""
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"--set needs key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        if not key:
            raise UsageError(f"--set needs a nonempty key in {pair!r}")
        out[key] = value
    return out


def _coerce(cls, key, raw):
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    t = field_types[key]
    if t in ("bool", bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"{key} expects a boolean, got {raw!r}")
    if t in ("int", int):
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"{key} expects an integer, got {raw!r}") from None
    if t in ("float", float):
        try:
            return float(raw)
        except ValueError:
            raise UsageError(f"{key} expects a number, got {raw!r}") from None
    return raw


def split_config_overrides(overrides, seed=None):
    """Route --set pairs to NetworkConfig/TrainConfig; reject unknown keys."""
    net_fields = {f.name for f in dataclasses.fields(NetworkConfig)}
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    net, train = {}, {}
    for key, raw in overrides.items():
        if key == "seed":
            raise UsageError("set the seed with --seed, not --set seed=")
        known = False
        if key in net_fields:
            net[key] = _coerce(NetworkConfig, key, raw)
            known = True
        if key in train_fields:
            train[key] = _coerce(TrainConfig, key, raw)
            known = True
        if not known:
            raise UsageError(f"unknown config key {key!r}")
    if seed is not None:
        net["seed"] = seed
        train["seed"] = seed
    return net, train


def write_sidecar(path, args, extra=None):
    """Echo the effective run configuration for reproducibility."""
    lines = [
        f"fieldnet {__version__}",
        f"command: {args.command}",
        f"backend: {active_backend()}",
        f"seed: {args.seed}",
        f"workers: {args.workers}",
    ]
    for pair in args.set or []:
        lines.append(f"set: {pair}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_synth(args):
    clip = read_clip(args.in_dir)
    stream = synth_interlaced(clip)
    write_field_stream(args.out_dir, stream)
    write_sidecar(Path(args.out_dir) / "run_config.txt", args,
                  {"in_dir": args.in_dir, "frames": len(clip)})
    print(f"wrote {len(stream.fields)} fields to {args.out_dir}")
    return 0


def _load_training_clips(data_dir):
    root = Path(data_dir)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        return [read_clip(d) for d in subdirs]
    return [read_clip(root)]


def cmd_train(args):
    overrides = parse_overrides(args.set)
    net_over, train_over = split_config_overrides(overrides, seed=args.seed)
    net_config = NetworkConfig(**net_over)
    train_config = TrainConfig(**train_over)
    clips = _load_training_clips(args.data_dir)

    weights = init_weights(net_config)
    out = Path(args.out_weights)
    out.parent.mkdir(parents=True, exist_ok=True)
    loss_csv = args.loss_csv or str(out) + ".loss.csv"
    checkpoint_dir = args.checkpoint_dir
    if checkpoint_dir:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    curve = train_loop(weights, clips, train_config, loss_csv_path=None,
                       checkpoint_dir=checkpoint_dir, workers=args.workers,
                       log_every=args.log_every)
    save_weights(weights, out)
    write_loss_csv(loss_csv, curve)
    write_sidecar(str(out) + ".config.txt", args, {
        "data_dir": args.data_dir,
        "clips": len(clips),
        "network_config": net_config.to_dict(),
        "train_config": train_config.to_dict(),
        "loss_csv": loss_csv,
    })
    print(f"trained {train_config.iterations} iterations, "
          f"final loss {curve[-1][1]:.6f}, weights at {out}")
    return 0


def cmd_deinterlace(args):
    overrides = parse_overrides(args.set)
    baseline = overrides.pop("baseline", None)
    stream = read_field_stream(args.fields_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if baseline is not None:
        if baseline not in BASELINE_NAMES:
            raise UsageError(f"unknown baseline {baseline!r}, expected one "
                             f"of {BASELINE_NAMES}")
        def estimate(index):
            return deinterlace_baseline(stream, index, baseline)
        source = f"baseline:{baseline}"
    else:
        if not args.weights:
            raise UsageError("deinterlace needs --weights or --set baseline=")
        weights = load_weights(args.weights)
        net_over, _ = split_config_overrides(overrides)
        config = weights.config.replace(**net_over) if net_over else None
        def estimate(index):
            return deinterlace_frame(make_window(stream, index), weights,
                                     config=config)
        source = f"weights:{args.weights}"

    indices = range(len(stream))
    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            frames = list(pool.map(estimate, indices))
    else:
        frames = [estimate(i) for i in indices]
    for i, frame in zip(indices, frames):
        write_ppm(out_dir / frame_name(i), frame.pixels)
    write_sidecar(out_dir / "run_config.txt", args,
                  {"fields_dir": args.fields_dir, "source": source,
                   "frames": len(frames)})
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def cmd_eval(args):
    overrides = parse_overrides(args.set)
    clip = read_clip(args.gt_dir)
    if args.method == "model":
        if not args.weights:
            raise UsageError("eval --method model needs --weights")
        weights = load_weights(args.weights)
        net_over, _ = split_config_overrides(overrides)
        config = weights.config.replace(**net_over) if net_over else None
        estimator = model_estimator(weights, config=config)
    elif args.method == "gt":
        estimator = ground_truth_estimator(clip)
    else:
        estimator = baseline_estimator(args.method)
    report = eval_clip(estimator, clip, report_path=args.report_csv,
                       workers=args.workers)
    write_sidecar(str(args.report_csv) + ".config.txt", args, {
        "gt_dir": args.gt_dir,
        "method": args.method,
        "weights": args.weights,
        "frames_evaluated": len(report.frames),
        "excluded_edge_frames": report.excluded_edge_frames,
    })
    print(f"mean_psnr={report.mean_psnr:.6f} mean_ssim={report.mean_ssim:.6f} "
          f"frames={len(report.frames)}")
    return 0


def cmd_bench_attn(args):
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise UsageError(f"--sizes expects comma-separated ints, got "
                         f"{args.sizes!r}") from None
    result = bench_attention(sizes=sizes, seed=args.seed)
    write_bench_csv(args.out_csv, result)
    write_sidecar(str(args.out_csv) + ".config.txt", args, {
        "sizes": list(sizes),
        "sa_exponent": f"{result.sa_exponent:.4f}",
        "esa_exponent": f"{result.esa_exponent:.4f}",
    })
    print(f"sa_exponent={result.sa_exponent:.3f} "
          f"esa_exponent={result.esa_exponent:.3f}")
    for row in result.rows:
        print(f"  {row.mode:>4} n={row.n:<6} {row.seconds * 1e3:8.2f} ms  "
              f"peak {row.peak_bytes / 1e6:8.2f} MB  deviation {row.deviation:.3e}")
    return 0


def build_parser():
    parser = _Parser(prog="fieldnet",
                     description="multi-field video deinterlacing network")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, repeatable")

    p = sub.add_parser("synth", help="split progressive frames into fields")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on progressive clips")
    p.add_argument("data_dir")
    p.add_argument("out_weights")
    p.add_argument("--loss-csv", default=None)
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--log-every", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("deinterlace", help="deinterlace a field stream")
    p.add_argument("fields_dir")
    p.add_argument("out_dir")
    p.add_argument("--weights", default=None)
    common(p)
    p.set_defaults(func=cmd_deinterlace)

    p = sub.add_parser("eval", help="score a method against a progressive clip")
    p.add_argument("gt_dir")
    p.add_argument("report_csv")
    p.add_argument("--method", choices=EVAL_METHODS, default="model")
    p.add_argument("--weights", default=None)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-attn", help="benchmark sa vs esa attention")
    p.add_argument("out_csv")
    p.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_SIZES))
    common(p)
    p.set_defaults(func=cmd_bench_attn)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"fieldnet: usage error: {e}", file=sys.stderr)
        return 1
    except NumericalAbort as e:
        print(f"fieldnet: numerical abort: {e}", file=sys.stderr)
        return 3
    except (FieldnetError, OSError) as e:
        print(f"fieldnet: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
