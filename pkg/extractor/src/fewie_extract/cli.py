"""CLI: fewie-extract --model <id> --corpus <path> --out <store> [...]"""

from __future__ import annotations

import argparse
import sys

from fewie_extract.corpus import CorpusError
from fewie_extract.extract import ExtractionError, ExtractionSpec, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewie-extract",
        description="Write per-token transformer embeddings into a fewie-bench "
                    "embedding store.",
    )
    parser.add_argument("--model", required=True, help="model name or local path")
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--format", choices=["conll", "jsonl"], default="conll")
    parser.add_argument("--out", required=True, help="output store file")
    parser.add_argument("--pool", choices=["first", "mean"], default="first",
                        help="subword pooling per corpus token")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--max-length", type=int, default=128,
                        help="token and subword truncation limit")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--token-col", type=int, default=0)
    parser.add_argument("--tag-col", type=int, default=-1)
    parser.add_argument("--report", default=None,
                        help="sidecar report path (default: <out>.report.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExtractionSpec(
        model=args.model,
        corpus_path=args.corpus,
        corpus_format=args.format,
        output_path=args.out,
        pool=args.pool,
        batch_size=args.batch,
        max_length=args.max_length,
        device=args.device,
        token_col=args.token_col,
        tag_col=args.tag_col,
        report_path=args.report,
    )
    try:
        report = extract(spec)
    except (CorpusError, ExtractionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {report['sentences_written']}/{report['sentences_total']} "
          f"sentences (dim {report['dim']}) to {args.out}")
    if report["skipped"]:
        print(f"skipped {len(report['skipped'])} sentence(s); see "
              f"{spec.resolved_report_path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
