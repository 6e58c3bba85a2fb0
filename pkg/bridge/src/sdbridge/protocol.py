"""Server-side implementation of the length-prefixed tensor protocol.

Independent of the client package on purpose: the wire format is the
contract. Frame = 8-byte little-endian payload length, then a JSON header
line terminated by LF, then raw little-endian float32 tensors in
header-declared order (row-major).
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

LENGTH_FMT = "<Q"
LENGTH_BYTES = 8
HEADER_SEP = b"\n"
MAX_PAYLOAD = 1 << 31


class FrameError(Exception):
    """Malformed incoming frame."""


def encode_frame(header: dict, tensors: list[tuple[str, np.ndarray]]) -> bytes:
    meta = []
    blobs = []
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        meta.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        blobs.append(arr.tobytes())
    full = dict(header)
    full["tensors"] = meta
    payload = json.dumps(full).encode("utf-8") + HEADER_SEP + b"".join(blobs)
    return struct.pack(LENGTH_FMT, len(payload)) + payload


def parse_payload(payload: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    sep = payload.find(HEADER_SEP)
    if sep < 0:
        raise FrameError("missing header terminator")
    try:
        header = json.loads(payload[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"bad JSON header: {exc}") from None
    if not isinstance(header, dict) or "type" not in header:
        raise FrameError("header must carry a 'type'")
    tensors: dict[str, np.ndarray] = {}
    offset = sep + 1
    for meta in header.get("tensors", []):
        if meta.get("dtype") != "float32":
            raise FrameError(f"unsupported dtype {meta.get('dtype')!r}")
        shape = tuple(int(s) for s in meta["shape"])
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FrameError("truncated tensor payload")
        # copy out of the frame buffer so torch gets writable memory
        tensors[meta["name"]] = (
            np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(payload):
        raise FrameError("trailing bytes after tensors")
    return header, tensors


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes | None:
    head = recv_exact(sock, LENGTH_BYTES)
    if head is None:
        return None
    (length,) = struct.unpack(LENGTH_FMT, head)
    if length == 0:
        return b""
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} exceeds cap")
    payload = recv_exact(sock, length)
    if payload is None:
        raise FrameError("connection closed mid-payload")
    return payload


def response_frame(request_id: int, result: np.ndarray) -> bytes:
    return encode_frame(
        {"type": "response", "request_id": int(request_id)}, [("result", result)]
    )


def error_frame(request_id: int, message: str) -> bytes:
    return encode_frame(
        {"type": "error", "request_id": int(request_id), "message": message}, []
    )
