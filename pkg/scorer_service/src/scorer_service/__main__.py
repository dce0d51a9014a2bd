"""Entry point: scorer-service --backend static --checkpoint model.npz"""

from __future__ import annotations

import argparse
import sys

from .protocol import Responder, serve_socket, serve_stream


def build_backend(args):
    if args.backend == "static":
        if not args.checkpoint:
            raise SystemExit("--backend static requires --checkpoint")
        from .static_backend import StaticBackend

        return StaticBackend(args.checkpoint, max_admissible=args.max_admissible)
    if args.backend == "contextual":
        from .contextual_backend import ContextualBackend

        return ContextualBackend(
            model_dir=args.model_dir,
            hidden=args.hidden,
            seed=args.seed,
            max_admissible=args.max_admissible,
        )
    raise SystemExit(f"unknown backend {args.backend!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scorer-service")
    parser.add_argument("--backend", choices=["static", "contextual"], default="static")
    parser.add_argument("--checkpoint", help="engine checkpoint (.npz) for the static backend")
    parser.add_argument("--model-dir", help="local pretrained encoder directory")
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-admissible", type=int, default=4096)
    parser.add_argument("--socket", help="serve on a unix socket instead of stdio")
    args = parser.parse_args(argv)

    responder = Responder(build_backend(args))
    if args.socket:
        serve_socket(responder, args.socket)
    else:
        serve_stream(responder, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
