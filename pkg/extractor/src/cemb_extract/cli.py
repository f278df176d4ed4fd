"""Command line: extract per-token contextual vectors into a CEMB store."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoders import ModelLoadError
from .extract import ExtractionJob, extract

log = logging.getLogger("cemb_extract")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemb-extract",
        description="Embed pre-tokenized sentences with a contextual language "
                    "model and write a CEMB store",
    )
    parser.add_argument("--model", required=True,
                        help="HF model name/path, random-bert-{large,base,small}, "
                             "or random-flair")
    parser.add_argument("--input", required=True, help="pairs JSONL or labeled TSV")
    parser.add_argument("--output", required=True, help="CEMB store path")
    parser.add_argument("--pool", choices=["mean", "first"], default="mean",
                        help="subword-to-token pooling")
    parser.add_argument("--layer", type=int, default=-1,
                        help="hidden layer to export (default: final)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch", type=int, default=8)
    parser.add_argument("--log-level", default="info",
                        choices=["debug", "info", "warning", "error"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    job = ExtractionJob(
        model=args.model,
        input_path=args.input,
        output_path=args.output,
        pool=args.pool,
        layer=args.layer,
        seed=args.seed,
        batch_size=args.batch,
    )
    try:
        report = extract(job)
    except (ModelLoadError, OSError, ValueError) as err:
        log.error("%s", err)
        return 1
    log.info("wrote %d sentences (dim %d), skipped %d",
             report.written, report.dim, len(report.skipped))
    return 0


if __name__ == "__main__":
    sys.exit(main())
