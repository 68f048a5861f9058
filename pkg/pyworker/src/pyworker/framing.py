"""FDN1 frame reader/writer.

Wire layout per frame: magic "FDN1" | type byte | u32 payload length |
payload, everything little-endian, tensors as float32 in C order. This
module is deliberately dependency-free of the engine package: the bytes
on the pipe are the entire contract.
"""

from __future__ import annotations

import os
import select
import struct
import time

import numpy as np

MAGIC = b"FDN1"
HEADER = struct.Struct("<4sBI")

HELLO = 0x01
HELLO_ACK = 0x02
EPS_REQ = 0x03
EPS_RESP = 0x04
SHUTDOWN = 0x05
ERROR = 0x7F

KNOWN = {HELLO, HELLO_ACK, EPS_REQ, EPS_RESP, SHUTDOWN, ERROR}
MAX_PAYLOAD = 1 << 30


class FrameError(RuntimeError):
    pass


def read_exact(fd: int, n: int, deadline: float | None) -> bytes:
    chunks, remaining = [], n
    while remaining > 0:
        if deadline is not None:
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise FrameError(f"timed out with {remaining} of {n} bytes unread")
            ready, _, _ = select.select([fd], [], [], budget)
            if not ready:
                raise FrameError(f"timed out with {remaining} of {n} bytes unread")
        chunk = os.read(fd, min(remaining, 1 << 20))
        if not chunk:
            raise FrameError(f"stream closed with {remaining} of {n} bytes unread")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(fd: int, timeout: float | None = None) -> tuple[int, bytes]:
    deadline = None if timeout is None else time.monotonic() + timeout
    magic, msg_type, length = HEADER.unpack(read_exact(fd, HEADER.size, deadline))
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if msg_type not in KNOWN:
        raise FrameError(f"unknown message type 0x{msg_type:02x}")
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} exceeds limit")
    payload = read_exact(fd, length, deadline) if length else b""
    return msg_type, payload


def write_frame(stream, msg_type: int, payload: bytes = b"") -> None:
    stream.write(HEADER.pack(MAGIC, msg_type, len(payload)))
    if payload:
        stream.write(payload)
    stream.flush()


def parse_hello(payload: bytes) -> tuple[int, tuple[int, int, int], np.ndarray]:
    if len(payload) < 16:
        raise FrameError("HELLO payload too short")
    T, c, h, w = struct.unpack("<IIII", payload[:16])
    if len(payload) != 16 + 4 * T:
        raise FrameError(f"HELLO payload length {len(payload)} wrong for T={T}")
    betas = np.frombuffer(payload, dtype="<f4", offset=16).astype(np.float64)
    return T, (c, h, w), betas


def parse_eps_req(payload: bytes, shape: tuple[int, int, int]) -> tuple[int, np.ndarray]:
    n = int(np.prod(shape))
    if len(payload) != 4 + 4 * n:
        raise FrameError(
            f"EPS_REQ payload length {len(payload)} wrong for shape {shape}"
        )
    (t,) = struct.unpack("<I", payload[:4])
    x = np.frombuffer(payload, dtype="<f4", offset=4).astype(np.float64)
    return t, x.reshape(shape)


def pack_eps_resp(eps: np.ndarray) -> bytes:
    return np.ascontiguousarray(eps, dtype="<f4").tobytes()
