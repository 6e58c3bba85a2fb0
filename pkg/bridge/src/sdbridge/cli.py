"""Bridge CLI: host a denoiser/decoder model behind the wire protocol."""

from __future__ import annotations

import argparse
import sys
import threading

from .models import build_model
from .server import BridgeServer, ServerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sd-bridge",
        description="Serve a depth-conditioned denoiser/decoder over TCP",
    )
    parser.add_argument("--listen", default="127.0.0.1:7351", help="host:port")
    parser.add_argument(
        "--model", default="tiny",
        help='"tiny" (built-in debug net) or an SD depth model id, e.g. '
             '"sd:stabilityai/stable-diffusion-2-depth"',
    )
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=16)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ServerConfig(
        listen=args.listen, model=args.model, device=args.device,
        max_batch=args.max_batch,
    )
    try:
        model = build_model(config.model, device=config.device)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    server = BridgeServer(model, config).start()
    host, port = server.address
    print(f"sd-bridge serving {config.model!r} on {host}:{port}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
