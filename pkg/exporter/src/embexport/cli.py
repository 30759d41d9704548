"""Command line: export per-layer embeddings for a JSONL sentence file."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import ExportError, ExportJob, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export per-layer hidden states of a pretrained model to a "
        "ULEMB01 embedding file with word/subword alignment.",
    )
    parser.add_argument("--model", required=True, help="model identifier or local path")
    parser.add_argument("--input", required=True, help="JSONL sentence file")
    parser.add_argument("--output", required=True, help="output .ulemb path")
    parser.add_argument("--strip-diacritics", action="store_true")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-length", type=int, default=512)
    parser.add_argument("--language", default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    job = ExportJob(
        model_id=args.model,
        input_path=args.input,
        output_path=args.output,
        device=args.device,
        max_length=args.max_length,
        strip_diacritics=args.strip_diacritics,
        language=args.language,
    )
    try:
        meta = export_embeddings(job)
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.output}: {len(meta['sentence_ids'])} sentences, "
        f"{len(meta['zero_padded_words'])} zero-padded words, "
        f"{len(meta['skipped_sentences'])} skipped"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
