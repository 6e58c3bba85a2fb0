"""Length-prefixed binary frames: JSON header line + raw float32 tensors.

Frame layout (little-endian throughout):

    [8-byte uint64 payload length][payload]
    payload = JSON header (UTF-8, no embedded newlines) + b"\\n"
              + tensor bytes, concatenated in header-declared order

The header carries {"type", "request_id", "tensors": [{name, shape,
dtype}], ...scalars}. Tensors are row-major little-endian float32, so any
language can produce bit-exact payloads. Message types: predict_noise,
decode, decode_pullback, response, error.
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

from ..errors import MeshtexError

HEADER_SEP = b"\n"
LENGTH_FMT = "<Q"
LENGTH_BYTES = 8
MAX_PAYLOAD = 1 << 31

REQUEST_TYPES = ("predict_noise", "decode", "decode_pullback")


class ProtocolError(MeshtexError):
    """Malformed frame or header."""


def encode_frame(header: dict, tensors: list[tuple[str, np.ndarray]]) -> bytes:
    """Serialize a message; casts tensors to little-endian float32."""
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
    """Split a payload into its header dict and named float32 tensors."""
    sep = payload.find(HEADER_SEP)
    if sep < 0:
        raise ProtocolError("payload has no header terminator")
    try:
        header = json.loads(payload[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad JSON header: {exc}") from None
    if not isinstance(header, dict) or "type" not in header:
        raise ProtocolError("header must be an object with a 'type' field")

    tensors: dict[str, np.ndarray] = {}
    offset = sep + 1
    for meta in header.get("tensors", []):
        if meta.get("dtype") != "float32":
            raise ProtocolError(f"unsupported dtype {meta.get('dtype')!r}")
        shape = tuple(int(s) for s in meta["shape"])
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ProtocolError("truncated tensor payload")
        tensors[meta["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise ProtocolError("trailing bytes after declared tensors")
    return header, tensors


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one payload; None on clean EOF. Raises ProtocolError on abuse."""
    head = _recv_exact(sock, LENGTH_BYTES)
    if head is None:
        return None
    (length,) = struct.unpack(LENGTH_FMT, head)
    if length == 0:
        return b""
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds cap")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-payload")
    return payload


def write_frame(sock: socket.socket, frame: bytes) -> None:
    sock.sendall(frame)


def response_frame(request_id: int, result: np.ndarray) -> bytes:
    return encode_frame(
        {"type": "response", "request_id": int(request_id)}, [("result", result)]
    )


def error_frame(request_id: int, message: str) -> bytes:
    return encode_frame(
        {"type": "error", "request_id": int(request_id), "message": message}, []
    )
