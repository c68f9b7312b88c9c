"""Command-line entry point: embed --in corpus.jsonl --out embeddings.bin."""

from __future__ import annotations

import argparse
import sys

from .core import DEFAULT_MODEL, SidecarConfig, embed_corpus


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="embed",
        description="Encode a JSONL corpus into the toolkit's binary embedding format.",
    )
    ap.add_argument("--in", dest="input_path", required=True, help="JSONL corpus to encode")
    ap.add_argument("--out", dest="output_path", required=True, help="embedding file to write")
    ap.add_argument("--model", default=DEFAULT_MODEL, help="sentence-encoder checkpoint or path")
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--device", default="cpu")
    args = ap.parse_args(argv)

    try:
        config = SidecarConfig(
            input_path=args.input_path,
            output_path=args.output_path,
            model_name=args.model,
            batch_size=args.batch_size,
            device=args.device,
        )
        out = embed_corpus(config)
    except Exception as exc:
        print(f"embed failed: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
