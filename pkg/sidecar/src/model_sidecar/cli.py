"""Command line entry point: parse flags, bind, load, serve."""
from __future__ import annotations

import argparse
import sys

from .config import SidecarConfig
from .server import create_app


def build_config(argv: list[str] | None = None) -> SidecarConfig:
    parser = argparse.ArgumentParser(
        prog="model-sidecar",
        description="Serve token-logit and entailment scoring over HTTP",
    )
    parser.add_argument("--mock-table", help="scorer table JSON (mock mode)")
    parser.add_argument("--mock-nli-table", help="entailment table JSON (mock mode)")
    parser.add_argument("--seq2seq-model", help="seq2seq checkpoint name or path")
    parser.add_argument("--nli-model", help="NLI checkpoint name or path")
    parser.add_argument("--template", help="template document JSON for marker ids")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8741)
    parser.add_argument("--batch-cap", type=int, default=16)
    args = parser.parse_args(argv)
    return SidecarConfig(
        mock_table=args.mock_table,
        mock_nli_table=args.mock_nli_table,
        seq2seq_model=args.seq2seq_model,
        nli_model=args.nli_model,
        template_path=args.template,
        host=args.host,
        port=args.port,
        batch_cap=args.batch_cap,
    )


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    try:
        config = build_config(argv)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
