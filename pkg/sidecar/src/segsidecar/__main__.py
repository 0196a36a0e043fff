"""Entry point: load the configured predictor and serve the protocol."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .predictors import SidecarConfig, build_predictor
from .server import serve_http, serve_stdio


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="segsidecar")
    parser.add_argument("--box-checkpoint", type=Path, help="checkpoint for box prompts")
    parser.add_argument("--grid-checkpoint", type=Path, help="checkpoint for grid-point prompts")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--demo", action="store_true", help="intensity-threshold stub, no checkpoints")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true", help="framed messages on stdin/stdout")
    mode.add_argument("--http", type=int, metavar="PORT", help="HTTP POST /rpc on this port")
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)

    config = SidecarConfig(
        box_checkpoint=args.box_checkpoint,
        grid_checkpoint=args.grid_checkpoint,
        device=args.device,
        demo=args.demo,
    )
    try:
        predictor = build_predictor(config)
    except (FileNotFoundError, RuntimeError) as exc:
        print(f"segsidecar: cannot load model: {exc}", file=sys.stderr)
        return 1

    if args.stdio:
        serve_stdio(predictor)
        return 0
    serve_http(predictor, args.host, args.http)
    return 0


if __name__ == "__main__":
    sys.exit(main())
