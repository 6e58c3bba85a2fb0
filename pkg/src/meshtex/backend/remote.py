"""TCP client for external denoiser/decoder servers.

Requests are pipelined: a background reader matches responses to callers
by request_id, so responses may arrive out of order. Tensors cross the
wire as float32 and come back as float32.
"""

from __future__ import annotations

import itertools
import queue
import socket
import threading

import numpy as np

from ..errors import (
    BackendShapeError,
    BackendTimeoutError,
    BackendUnavailableError,
)
from . import Backend, DecodeRequest, DenoiseRequest
from .protocol import ProtocolError, encode_frame, parse_payload, read_frame, write_frame

DEFAULT_TIMEOUT = 120.0

UPSAMPLE = 8


class RemoteBackend(Backend):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendUnavailableError(f"cannot reach {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        self._send_lock = threading.Lock()
        self._pending: dict[int, queue.Queue] = {}
        self._pending_lock = threading.Lock()
        self._ids = itertools.count(1)
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            while True:
                payload = read_frame(self._sock)
                if payload is None:
                    break
                try:
                    header, tensors = parse_payload(payload)
                except ProtocolError as exc:
                    self._fail_all(BackendUnavailableError(f"garbled response: {exc}"))
                    return
                rid = int(header.get("request_id", 0))
                with self._pending_lock:
                    q = self._pending.get(rid)
                if q is not None:
                    q.put((header, tensors))
        except OSError:
            pass
        finally:
            self._fail_all(BackendUnavailableError("connection closed by server"))

    def _fail_all(self, exc: Exception) -> None:
        with self._pending_lock:
            pending = list(self._pending.values())
            self._pending.clear()
            self._closed = True
        for q in pending:
            q.put(exc)

    def _call(self, header: dict, tensors: list[tuple[str, np.ndarray]]) -> np.ndarray:
        if self._closed:
            raise BackendUnavailableError("backend connection is closed")
        rid = next(self._ids)
        header = dict(header, request_id=rid)
        q: queue.Queue = queue.Queue(1)
        with self._pending_lock:
            self._pending[rid] = q
        try:
            frame = encode_frame(header, tensors)
            with self._send_lock:
                write_frame(self._sock, frame)
            try:
                item = q.get(timeout=self.timeout)
            except queue.Empty:
                raise BackendTimeoutError(
                    f"no response to request {rid} within {self.timeout}s"
                ) from None
        finally:
            with self._pending_lock:
                self._pending.pop(rid, None)
        if isinstance(item, Exception):
            raise item
        resp_header, resp_tensors = item
        if resp_header.get("type") == "error":
            raise BackendUnavailableError(
                f"server error: {resp_header.get('message', 'unknown')}"
            )
        if "result" not in resp_tensors:
            raise BackendShapeError("response carries no 'result' tensor")
        return resp_tensors["result"]

    def predict_noise(self, request: DenoiseRequest) -> np.ndarray:
        tensors = [("latents", request.latents)]
        if request.depth_maps is not None:
            tensors.append(("depth_maps", request.depth_maps))
        result = self._call(
            {
                "type": "predict_noise",
                "timestep_index": int(request.timestep_index),
                "alpha_bar_t": float(request.alpha_bar_t),
                "guidance_scale": float(request.guidance_scale),
                "prompts": list(request.prompts),
            },
            tensors,
        )
        if result.shape != request.latents.shape:
            raise BackendShapeError(
                f"noise prediction {result.shape} != latents {request.latents.shape}"
            )
        return result

    def decode(self, request: DecodeRequest) -> np.ndarray:
        b, h, w, _ = request.latents.shape
        result = self._call({"type": "decode"}, [("latents", request.latents)])
        if result.shape != (b, h * UPSAMPLE, w * UPSAMPLE, 3):
            raise BackendShapeError(f"decoded shape {result.shape} unexpected")
        return result

    def decode_pullback(self, latents: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents)
        result = self._call(
            {"type": "decode_pullback"},
            [("latents", latents), ("cotangent", cotangent)],
        )
        if result.shape != latents.shape:
            raise BackendShapeError(
                f"pullback shape {result.shape} != latents {latents.shape}"
            )
        return result

    def close(self) -> None:
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
