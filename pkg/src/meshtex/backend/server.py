"""Serve any in-process Backend over the wire protocol (testing/debug).

Each connection is handled on its own thread; requests on a connection
are answered in order. Malformed frames get an error frame back and the
connection stays open.
"""

from __future__ import annotations

import socketserver
import threading

import numpy as np

from ..errors import MeshtexError
from . import Backend, DecodeRequest, DenoiseRequest
from .protocol import (
    ProtocolError,
    error_frame,
    parse_payload,
    read_frame,
    response_frame,
    write_frame,
)


def _dispatch(backend: Backend, header: dict, tensors: dict) -> np.ndarray:
    kind = header["type"]
    if kind == "predict_noise":
        if "latents" not in tensors:
            raise ProtocolError("predict_noise needs a 'latents' tensor")
        request = DenoiseRequest(
            latents=tensors["latents"],
            timestep_index=int(header.get("timestep_index", 0)),
            alpha_bar_t=float(header["alpha_bar_t"]),
            prompts=list(header.get("prompts", [])),
            guidance_scale=float(header.get("guidance_scale", 7.5)),
            depth_maps=tensors.get("depth_maps"),
        )
        return backend.predict_noise(request)
    if kind == "decode":
        if "latents" not in tensors:
            raise ProtocolError("decode needs a 'latents' tensor")
        return backend.decode(DecodeRequest(latents=tensors["latents"]))
    if kind == "decode_pullback":
        if "latents" not in tensors or "cotangent" not in tensors:
            raise ProtocolError("decode_pullback needs 'latents' and 'cotangent'")
        return backend.decode_pullback(tensors["latents"], tensors["cotangent"])
    raise ProtocolError(f"unknown message type {kind!r}")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        backend: Backend = self.server.backend  # type: ignore[attr-defined]
        while True:
            try:
                payload = read_frame(self.request)
            except (ProtocolError, OSError):
                return
            if payload is None:
                return
            rid = 0
            try:
                header, tensors = parse_payload(payload)
                rid = int(header.get("request_id", 0))
                result = _dispatch(backend, header, tensors)
                write_frame(self.request, response_frame(rid, result))
            except (ProtocolError, MeshtexError, ValueError, KeyError) as exc:
                try:
                    write_frame(self.request, error_frame(rid, str(exc)))
                except OSError:
                    return


class BackendServer:
    """Threaded TCP server exposing `backend` at (host, port)."""

    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _Handler)
        self._server.backend = backend  # type: ignore[attr-defined]
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address  # type: ignore[return-value]

    def start(self) -> "BackendServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
