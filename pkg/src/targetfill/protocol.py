"""FDN1 frame codec for the external-denoiser wire protocol.

Every frame is magic "FDN1" | message type (1 byte) | payload length
(u32, little-endian) | payload. All multi-byte integers and floats on the
wire are little-endian; tensors travel as float32 in C order (row-major
within each channel, channels outermost).

Message types:
    0x01 HELLO      u32 T | u32 C | u32 H | u32 W | T x float32 beta
    0x02 HELLO_ACK  empty
    0x03 EPS_REQ    u32 t | C*H*W x float32 x_t
    0x04 EPS_RESP   C*H*W x float32 epsilon
    0x05 SHUTDOWN   empty
    0x7F ERROR      UTF-8 message
"""

from __future__ import annotations

import os
import select
import struct
import time

import numpy as np

MAGIC = b"FDN1"
HEADER = struct.Struct("<4sBI")

MSG_HELLO = 0x01
MSG_HELLO_ACK = 0x02
MSG_EPS_REQ = 0x03
MSG_EPS_RESP = 0x04
MSG_SHUTDOWN = 0x05
MSG_ERROR = 0x7F

_KNOWN_TYPES = {
    MSG_HELLO,
    MSG_HELLO_ACK,
    MSG_EPS_REQ,
    MSG_EPS_RESP,
    MSG_SHUTDOWN,
    MSG_ERROR,
}

MAX_PAYLOAD = 1 << 30


class ProtocolError(RuntimeError):
    """Frame-level violation: bad magic, bad lengths, timeouts, early EOF."""


def write_frame(stream, msg_type: int, payload: bytes = b"") -> None:
    stream.write(HEADER.pack(MAGIC, msg_type, len(payload)))
    if payload:
        stream.write(payload)
    stream.flush()


def _read_exact(fd: int, n: int, deadline: float | None) -> bytes:
    """Read exactly n bytes from a pipe fd, or raise ProtocolError."""
    chunks = []
    remaining = n
    while remaining > 0:
        if deadline is not None:
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise ProtocolError(f"timed out waiting for {remaining} of {n} bytes")
            ready, _, _ = select.select([fd], [], [], budget)
            if not ready:
                raise ProtocolError(f"timed out waiting for {remaining} of {n} bytes")
        chunk = os.read(fd, min(remaining, 1 << 20))
        if not chunk:
            raise ProtocolError(f"stream closed with {remaining} of {n} bytes unread")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(fd: int, timeout: float | None = None) -> tuple[int, bytes]:
    """Read one frame from a pipe fd; validates magic, type, and length."""
    deadline = None if timeout is None else time.monotonic() + timeout
    header = _read_exact(fd, HEADER.size, deadline)
    magic, msg_type, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if msg_type not in _KNOWN_TYPES:
        raise ProtocolError(f"unknown message type 0x{msg_type:02x}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit")
    payload = _read_exact(fd, length, deadline) if length else b""
    return msg_type, payload


def pack_hello(T: int, channels: int, height: int, width: int, betas) -> bytes:
    head = struct.pack("<IIII", T, channels, height, width)
    return head + np.asarray(betas, dtype="<f4").tobytes()


def unpack_hello(payload: bytes) -> tuple[int, int, int, int, np.ndarray]:
    if len(payload) < 16:
        raise ProtocolError(f"HELLO payload too short ({len(payload)} bytes)")
    T, channels, height, width = struct.unpack("<IIII", payload[:16])
    expected = 16 + 4 * T
    if len(payload) != expected:
        raise ProtocolError(
            f"HELLO payload length {len(payload)} != {expected} for T={T}"
        )
    betas = np.frombuffer(payload, dtype="<f4", offset=16).astype(np.float64)
    return T, channels, height, width, betas


def pack_eps_req(t: int, x: np.ndarray) -> bytes:
    return struct.pack("<I", t) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def unpack_eps_req(payload: bytes, shape: tuple[int, int, int]) -> tuple[int, np.ndarray]:
    n = int(np.prod(shape))
    expected = 4 + 4 * n
    if len(payload) != expected:
        raise ProtocolError(
            f"EPS_REQ payload length {len(payload)} != {expected} for shape {shape}"
        )
    (t,) = struct.unpack("<I", payload[:4])
    x = np.frombuffer(payload, dtype="<f4", offset=4).astype(np.float64)
    return t, x.reshape(shape)


def pack_eps_resp(eps: np.ndarray) -> bytes:
    return np.ascontiguousarray(eps, dtype="<f4").tobytes()


def unpack_eps_resp(payload: bytes, shape: tuple[int, int, int]) -> np.ndarray:
    n = int(np.prod(shape))
    if len(payload) != 4 * n:
        raise ProtocolError(
            f"EPS_RESP payload length {len(payload)} != {4 * n} for shape {shape}"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
