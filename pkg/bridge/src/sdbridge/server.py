"""The bridge server: wire frames in, model calls out.

Model invocations are serialized behind one lock (GPU semantics); each
connection is answered in request order. Malformed frames and failed
requests get an error frame carrying the request_id; the connection
survives.
"""

from __future__ import annotations

import socketserver
import threading
from dataclasses import dataclass

import numpy as np

from .models import UPSAMPLE
from .protocol import (
    FrameError,
    error_frame,
    parse_payload,
    read_frame,
    response_frame,
)


@dataclass
class ServerConfig:
    listen: str = "127.0.0.1:7351"
    model: str = "tiny"
    device: str = "cpu"
    max_batch: int = 16
    timeout_seconds: float = 300.0

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")

    @property
    def host(self) -> str:
        host, _, _ = self.listen.rpartition(":")
        return host or "127.0.0.1"

    @property
    def port(self) -> int:
        _, _, port = self.listen.rpartition(":")
        return int(port)


class RequestProblem(Exception):
    """Invalid request content; reported back as an error frame."""


def _require_latents(tensors: dict, max_batch: int) -> np.ndarray:
    if "latents" not in tensors:
        raise RequestProblem("missing 'latents' tensor")
    latents = tensors["latents"]
    if latents.ndim != 4:
        raise RequestProblem(f"latents must be B x h x w x C, got {latents.shape}")
    if latents.shape[0] < 1 or latents.shape[0] > max_batch:
        raise RequestProblem(f"batch {latents.shape[0]} outside [1, {max_batch}]")
    if not np.isfinite(latents).all():
        raise RequestProblem("latents contain non-finite values")
    return latents


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: BridgeServer = self.server.bridge  # type: ignore[attr-defined]
        while True:
            try:
                payload = read_frame(self.request)
            except (FrameError, OSError):
                return
            if payload is None:
                return
            rid = 0
            try:
                header, tensors = parse_payload(payload)
                rid = int(header.get("request_id", 0))
                result = server.dispatch(header, tensors)
                self.request.sendall(response_frame(rid, result))
            except (FrameError, RequestProblem, KeyError, ValueError) as exc:
                try:
                    self.request.sendall(error_frame(rid, str(exc)))
                except OSError:
                    return


class BridgeServer:
    def __init__(self, model, config: ServerConfig, port: int | None = None):
        self.model = model
        self.config = config
        self._model_lock = threading.Lock()

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        bind_port = config.port if port is None else port
        self._server = _Server((config.host, bind_port), _Handler)
        self._server.bridge = self  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address  # type: ignore[return-value]

    def dispatch(self, header: dict, tensors: dict) -> np.ndarray:
        kind = header["type"]
        latents = _require_latents(tensors, self.config.max_batch)
        if kind == "predict_noise":
            prompts = list(header.get("prompts", []))
            if len(prompts) != latents.shape[0]:
                raise RequestProblem("need one prompt per batch item")
            if "alpha_bar_t" not in header:
                raise RequestProblem("predict_noise needs alpha_bar_t")
            with self._model_lock:
                return self.model.predict_noise(
                    latents,
                    float(header["alpha_bar_t"]),
                    prompts,
                    float(header.get("guidance_scale", 7.5)),
                    tensors.get("depth_maps"),
                )
        if kind == "decode":
            with self._model_lock:
                return self.model.decode(latents)
        if kind == "decode_pullback":
            if "cotangent" not in tensors:
                raise RequestProblem("decode_pullback needs a 'cotangent' tensor")
            cot = tensors["cotangent"]
            b, h, w, _ = latents.shape
            if cot.shape != (b, h * UPSAMPLE, w * UPSAMPLE, 3):
                raise RequestProblem(f"cotangent shape {cot.shape} unexpected")
            with self._model_lock:
                return self.model.decode_pullback(latents, cot)
        raise RequestProblem(f"unknown message type {kind!r}")

    def start(self) -> "BridgeServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
