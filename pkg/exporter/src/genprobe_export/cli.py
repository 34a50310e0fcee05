"""Command line: export --ckpt P --filter G --model-id S --epoch N --train-acc X --test-acc Y --out D"""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, MissingTensor, NonFloatTensor, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genprobe-export",
        description="Convert a framework checkpoint into a genprobe weight container",
    )
    parser.add_argument("--ckpt", required=True, help="checkpoint path (torch state dict)")
    parser.add_argument("--filter", default="*", help="glob over parameter names")
    parser.add_argument("--model-id", required=True)
    parser.add_argument("--epoch", type=int, required=True)
    parser.add_argument("--optimizer", default="unknown")
    parser.add_argument("--dataset", default="unknown")
    parser.add_argument("--hyperparam", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--train-acc", type=float, required=True)
    parser.add_argument("--test-acc", type=float, required=True)
    parser.add_argument("--transpose", action="store_true",
                        help="checkpoint stores 4-D weights as (k_h, k_w, c_in, c_out)")
    parser.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "export":  # tolerate subcommand-style invocation
        argv = argv[1:]
    args = build_parser().parse_args(argv)
    hyperparams = {}
    for item in args.hyperparam:
        key, _, value = item.partition("=")
        hyperparams[key] = value
    job = ExportJob(
        checkpoint_path=args.ckpt,
        name_filter=args.filter,
        model_id=args.model_id,
        epoch=args.epoch,
        optimizer=args.optimizer,
        dataset=args.dataset,
        hyperparams=hyperparams,
        train_accuracy=args.train_acc,
        test_accuracy=args.test_acc,
        out_dir=args.out,
        transpose_4d=args.transpose,
    )
    try:
        export(job)
    except (MissingTensor, NonFloatTensor, ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
