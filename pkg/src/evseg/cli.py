"""``evseg`` command line.

Exit codes: 0 ok, 2 usage, 3 I/O failure, 4 invalid input data.
Window outputs are named by zero-padded window index (``000000.rpt1``), and
label maps share that stem so encode/synth/train/eval directories pair up.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import CLASS_NAMES, LabelMap, crop_bottom, load_samples
from .encoding import (
    ReprKind,
    StreamingAccumulator,
    encode_batch,
    load_rpt1,
    minmax_normalize,
    save_rpt1,
    visualize_channel,
)
from .errors import EvsegError
from .events import EventStream, SensorGeometry, read_anchors, read_events, save_events, slice_windows
from .metrics import ConfusionMatrix, accumulate_confusion, miou, report
from .pgm import read_pgm, write_pgm
from .pipeline import label_time
from .synth import generate_events, load_scene
from .toyseg import TrainConfig, load_model, predict, save_model, train

log = logging.getLogger("evseg")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INVALID = 4


class UsageError(Exception):
    pass


def _stem(i: int) -> str:
    return f"{i:06d}"


def _emit(pairs) -> None:
    for key, value in pairs:
        if isinstance(value, float):
            value = f"{value:.10g}"
        print(f"{key}={value}")


# --- subcommands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    scene, config = load_scene(args.scene)
    if args.seed is not None:
        config = type(config)(**{**config.__dict__, "seed": args.seed})
    stream, labels_at = generate_events(scene, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_events(stream, out / "events.evs1")
    n_labels = 0
    if len(stream):
        label_dir = out / "labels"
        label_dir.mkdir(exist_ok=True)
        for i, (w, _) in enumerate(slice_windows(stream, args.window_us)):
            write_pgm(label_dir / f"{_stem(i)}.pgm", labels_at(label_time(w, args.label_phase)).data)
            n_labels += 1
    log.info("wrote %d events and %d label maps to %s", len(stream), n_labels, out)
    _emit([("events", len(stream)), ("label_maps", n_labels)])
    return 0


def cmd_encode(args) -> int:
    stream = read_events(args.events)
    kind = ReprKind.from_name(args.repr)
    if args.anchors:
        anchors = read_anchors(Path(args.anchors).read_text(encoding="utf-8"))
        windows = slice_windows(stream, args.window_us, mode="centered", anchors=anchors)
    else:
        windows = slice_windows(stream, args.window_us)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (w, ev) in enumerate(windows):
        tensor = encode_batch(ev, w, stream.geometry, kind)
        if args.crop_bottom:
            tensor = crop_bottom(tensor, args.crop_bottom)
        if args.export == "minmax":
            tensor = minmax_normalize(tensor)
        save_rpt1(tensor, out / f"{_stem(i)}.rpt1", args.dtype)
    log.info("encoded %d windows (%s, T=%d us)", len(windows), kind.cli_name, args.window_us)
    _emit([("windows", len(windows)), ("events", sum(len(ev) for _, ev in windows)), ("repr", kind.cli_name)])
    return 0


def cmd_eval(args) -> int:
    pred_dir, truth_dir = Path(args.pred_dir), Path(args.truth_dir)
    for d in (pred_dir, truth_dir):
        if not d.is_dir():
            raise UsageError(f"{d} is not a directory")
    pairs = [(p, truth_dir / p.name) for p in sorted(pred_dir.glob("*.pgm")) if (truth_dir / p.name).exists()]
    if not pairs:
        raise UsageError("no prediction/truth PGM pairs with matching names")
    cm = ConfusionMatrix(args.classes)
    for p, t in pairs:
        cm = accumulate_confusion(cm, LabelMap.from_array(read_pgm(t)), LabelMap.from_array(read_pgm(p)))
    names = list(CLASS_NAMES) if args.classes == len(CLASS_NAMES) else None
    rep = report(cm, names)
    rep["images"] = len(pairs)
    if args.miou_policy != "both":
        rep["miou"] = miou(cm, args.miou_policy)[1]
    _emit(rep.items())
    return 0


def cmd_train(args) -> int:
    samples = load_samples(args.tensor_dir, args.label_dir)
    if not samples:
        raise UsageError("no <id>.rpt1/<id>.pgm pairs found")
    config = TrainConfig(
        learning_rate=args.lr,
        steps=args.steps,
        batch_pixels=args.batch_pixels,
        seed=args.seed if args.seed is not None else 0,
        l2=args.l2,
    )
    model, trace = train(None, samples, config, num_classes=args.classes)
    save_model(model, args.out)
    _emit([("samples", len(samples)), ("steps", len(trace)), ("loss_first", trace[0]), ("loss_last", trace[-1])])
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = sorted(Path(args.tensor_dir).glob("*.rpt1"))
    if not paths:
        raise UsageError(f"no .rpt1 files in {args.tensor_dir}")
    for p in paths:
        write_pgm(out / f"{p.stem}.pgm", predict(model, load_rpt1(p)).data)
    _emit([("predictions", len(paths))])
    return 0


def cmd_visualize(args) -> int:
    tensor = load_rpt1(args.tensor)
    write_pgm(args.out, visualize_channel(tensor, args.channel, args.scaling))
    return 0


def bench_stream(n_events: int, geometry: SensorGeometry, duration_us: int, seed: int) -> EventStream:
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, duration_us, size=n_events))
    x = rng.integers(0, geometry.width, size=n_events)
    y = rng.integers(0, geometry.height, size=n_events)
    p = rng.choice(np.array([-1, 1], np.int8), size=n_events)
    return EventStream(geometry, t, x, y, p)


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else 0
    geometry = SensorGeometry(args.width, args.height)
    stream = bench_stream(args.events, geometry, args.duration_us, seed)
    windows = slice_windows(stream, args.window_us)
    kind = ReprKind.from_name(args.repr)

    start = time.perf_counter()
    for w, ev in windows:
        encode_batch(ev, w, geometry, kind)
    batch_s = time.perf_counter() - start

    start = time.perf_counter()
    for w, ev in windows:
        StreamingAccumulator(geometry, w).add_stream(ev).finalize(kind)
    stream_s = time.perf_counter() - start

    n = len(stream)
    _emit([
        ("events", n),
        ("windows", len(windows)),
        ("repr", kind.cli_name),
        ("batch_seconds", batch_s),
        ("batch_events_per_s", n / batch_s if batch_s > 0 else float("inf")),
        ("stream_seconds", stream_s),
        ("stream_events_per_s", n / stream_s if stream_s > 0 else float("inf")),
    ])
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evseg {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    # global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    repr_names = [k.cli_name for k in ReprKind]

    p = sub.add_parser("synth", parents=[common], help="simulate a scene file into EVS1 events and PGM labels")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    p.add_argument("--window-us", type=int, default=50_000)
    p.add_argument("--label-phase", choices=("center", "end"), default="center")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", parents=[common], help="encode an EVS1 stream into one RPT1 tensor per window")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    p.add_argument("--repr", choices=repr_names, default="histmeanstd6")
    p.add_argument("--window-us", type=int, default=50_000)
    p.add_argument("--anchors", help="file of anchor timestamps; windows are [a - T, a)")
    p.add_argument("--export", choices=("raw", "minmax"), default="raw")
    p.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    p.add_argument("--crop-bottom", type=int, default=0, metavar="ROWS")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", parents=[common], help="score predicted label PGMs against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("truth_dir")
    p.add_argument("--classes", type=int, default=len(CLASS_NAMES))
    p.add_argument("--miou-policy", choices=("literal_eq9", "exclude_absent", "both"), default="both")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", parents=[common], help="fit the linear per-pixel model on paired RPT1/PGM directories")
    p.add_argument("tensor_dir")
    p.add_argument("label_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=len(CLASS_NAMES))
    p.add_argument("--steps", type=int, default=600)
    p.add_argument("--lr", type=float, default=2.0)
    p.add_argument("--batch-pixels", type=int, default=10**9)
    p.add_argument("--l2", type=float, default=0.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="label every RPT1 tensor in a directory")
    p.add_argument("model")
    p.add_argument("tensor_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("visualize", parents=[common], help="write one tensor channel as an 8-bit PGM")
    p.add_argument("tensor")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--scaling", choices=("minmax", "fixed_unit"), default="minmax")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("bench", parents=[common], help="events/second of the batch and streaming encoders")
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--duration-us", type=int, default=1_000_000)
    p.add_argument("--window-us", type=int, default=50_000)
    p.add_argument("--repr", choices=repr_names, default="histmeanstd6")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"evseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"evseg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EvsegError, ValueError) as exc:
        print(f"evseg: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
