"""Command line: one subcommand-free tool that extracts features.

Exit codes: 0 success, 1 usage problems, 2 dataset/model/checkpoint
problems. Decode failures print one line per broken file to stderr.
"""

import argparse
import logging
import os
import sys

from .datasets import NAMED_DATASETS
from .errors import DatasetError, ExtractorError
from .extract import extract
from .registry import load_registry


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="extract",
        description="Run a frozen pretrained encoder over an image dataset and "
        "write features in the embedding manifest format.",
    )
    p.add_argument("--dataset",
                   help=f"image directory, or one of: {', '.join(NAMED_DATASETS)}")
    p.add_argument("--model", help="model id from the registry")
    p.add_argument("--split", default=None,
                   help="subdirectory (folders) or split name (named datasets)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--checkpoint", default=None,
                   help="local weights file, for checkpoint-backed models")
    p.add_argument("--data-root", default=None,
                   help="where named datasets already live (never downloads)")
    p.add_argument("--name", default=None,
                   help="output basename (default: <model>_<split>)")
    p.add_argument("--list-models", action="store_true",
                   help="print the model registry and exit")
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EXTRACT_LOG", "INFO"),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.list_models:
        for name, spec in sorted(load_registry().items()):
            print(f"{name}: {spec.arch}, dim {spec.dim}, "
                  f"{spec.resize}->crop {spec.crop}, weights {spec.weights}")
        return 0

    missing = [flag for flag, v in
               (("--dataset", args.dataset), ("--model", args.model), ("--out", args.out))
               if v is None]
    if missing:
        print(f"error: {', '.join(missing)} required", file=sys.stderr)
        return 1

    try:
        manifest = extract(
            dataset=args.dataset,
            model_id=args.model,
            out_dir=args.out,
            split=args.split,
            batch_size=args.batch_size,
            device=args.device,
            checkpoint=args.checkpoint,
            data_root=args.data_root,
            name=args.name,
        )
    except DatasetError as exc:
        for path, reason in exc.failures:
            print(f"failed: {path}: {reason}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
