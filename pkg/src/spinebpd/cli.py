"""Command-line entry point: ``spinebpd <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import SPLITS, load_sample, write_landmarks
from .errors import CheckpointError, ContractError, DataFormatError, ExtractionError, GenerationError, NumericError
from .gradcheck import main_report
from .landmarks import extract_vertebra_corners
from .pgm import read_pgm, write_pgm
from .render import render_overlay
from .synthgen import MAX_SEVERITY, generate_dataset
from .train import LOSS_KINDS, ORACLE, TrainConfig, evaluate, predict, train

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def cmd_generate(args) -> int:
    counts = {"train": args.train, "val": args.val, "test": args.test}
    manifest = generate_dataset(args.seed, args.out, counts, args.height, args.width,
                                (args.severity_min, args.severity_max))
    n = sum(len(v) for v in manifest["splits"].values())
    print(f"wrote {n} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = TrainConfig(data_dir=args.data, epochs=args.epochs, alpha=args.alpha, lr=args.lr,
                         batch_size=args.batch, seed=args.seed, loss_kind=args.loss)
    log_path = args.log or f"{args.out}.log.jsonl"

    def progress(rec):
        if not args.quiet:
            print(f"epoch {rec['epoch']:4d}  train {rec['train_loss']:.6g}  val {rec['val_loss']:.6g}",
                  file=sys.stderr)

    result = train(config, log_path=log_path, progress=progress)
    save_checkpoint(args.out, result.checkpoint)
    print(f"checkpoint {args.out}, log {log_path}")
    return 0


def _checkpoint_arg(value: str):
    return ORACLE if value == ORACLE else load_checkpoint(value)


def cmd_evaluate(args) -> int:
    report = evaluate(_checkpoint_arg(args.ckpt), args.data, args.split)
    text = json.dumps(report.to_dict(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_render(args) -> int:
    image, _, gt = load_sample(args.data, args.sample)
    ckpt = _checkpoint_arg(args.ckpt)
    if ckpt == ORACLE:
        pred = gt.copy()
    else:
        cfg = ckpt.model_config
        if (cfg.input_height, cfg.input_width) != image.shape:
            raise ContractError(f"checkpoint expects {cfg.input_height}x{cfg.input_width} images, "
                                f"sample is {image.shape[0]}x{image.shape[1]}")
        pred = predict(cfg, ckpt.params, image[None, None])[0]
    overlay = render_overlay(image, gt, pred)
    write_pgm(args.out, overlay.raster)
    if args.svg:
        Path(args.svg).write_text(overlay.svg)
    print(f"{overlay.n_gt} ground-truth and {overlay.n_pred} predicted quadrilaterals -> {args.out}")
    return 0


def cmd_extract(args) -> int:
    mask = read_pgm(args.mask)
    pts = extract_vertebra_corners(mask, n_vertebrae=args.n_vertebrae)
    write_landmarks(args.out, pts)
    print(f"{len(pts)} landmarks -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    corrupt = frozenset(filter(None, (args.corrupt or "").split(",")))
    ok, text = main_report(args.seed, corrupt)
    print(text)
    return 0 if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spinebpd", description="Vertebral landmark regression with a bipartite-distance loss.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic spine dataset")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--train", type=int, default=80)
    g.add_argument("--val", type=int, default=5)
    g.add_argument("--test", type=int, default=15)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--severity-min", type=float, default=0.0)
    g.add_argument("--severity-max", type=float, default=MAX_SEVERITY)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a landmark regressor")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss", choices=LOSS_KINDS, default="mse-bpd")
    t.add_argument("--alpha", type=float, default=0.01)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch", type=int, default=4)
    t.add_argument("--epochs", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log", help="JSON-lines loss log (default: <out>.log.jsonl)")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="statistics of a checkpoint on a split")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True, help=f"checkpoint path or '{ORACLE}'")
    e.add_argument("--split", choices=SPLITS, default="test")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("render", help="overlay ground-truth and predicted vertebrae")
    r.add_argument("--data", required=True)
    r.add_argument("--ckpt", required=True, help=f"checkpoint path or '{ORACLE}'")
    r.add_argument("--sample", required=True)
    r.add_argument("--out", required=True, help="value-banded PGM")
    r.add_argument("--svg", help="optional color SVG")
    r.set_defaults(func=cmd_render)

    x = sub.add_parser("extract-landmarks", help="corner landmarks from a labeled vertebra mask")
    x.add_argument("--mask", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--n-vertebrae", type=int, default=18)
    x.set_defaults(func=cmd_extract)

    c = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--corrupt", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"spinebpd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, ContractError, ExtractionError, GenerationError, OSError) as exc:
        print(f"spinebpd: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
