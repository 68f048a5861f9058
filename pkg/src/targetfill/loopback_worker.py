"""Loopback FDN1 worker for protocol tests and `targetfill denoiser-check`.

Speaks the same wire format as a real model worker but computes epsilon
with the in-process closed forms (oracle reference image or conjugate
Gaussian), so the external transport path can be verified bit-for-bit
against the in-process backends.

Run as: python -m targetfill.loopback_worker --mode oracle --ref img.png
        python -m targetfill.loopback_worker --mode gaussian --mu 0.2 --var 0.01
"""

from __future__ import annotations

import argparse
import sys

from . import protocol
from .core import schedule_from_betas
from .denoise import AnalyticGaussianDenoiser, Capability, OracleDenoiser
from .imgio import load_png
from .protocol import ProtocolError


def _fail(out, message: str) -> int:
    try:
        protocol.write_frame(out, protocol.MSG_ERROR, message.encode("utf-8"))
    except OSError:
        pass
    return 1


def serve(stdin_fd: int, out, args) -> int:
    """Blocking serve loop: HELLO, then EPS_REQ/EPS_RESP until SHUTDOWN."""
    try:
        msg_type, payload = protocol.read_frame(stdin_fd, timeout=args.idle_timeout)
    except ProtocolError as exc:
        return _fail(out, f"bad first frame: {exc}")
    if msg_type != protocol.MSG_HELLO:
        return _fail(out, f"expected HELLO, got type 0x{msg_type:02x}")
    try:
        T, c, h, w, betas = protocol.unpack_hello(payload)
        sched = schedule_from_betas(betas)
    except (ProtocolError, ValueError) as exc:
        return _fail(out, f"bad HELLO: {exc}")

    if args.mode == "oracle":
        try:
            ref = load_png(args.ref)
        except (OSError, ValueError) as exc:
            return _fail(out, f"cannot load reference: {exc}")
        if ref.shape != (c, h, w):
            return _fail(out, f"reference shape {ref.shape} != session shape {(c, h, w)}")
        denoiser = OracleDenoiser(ref, sched)
    else:
        denoiser = AnalyticGaussianDenoiser(args.mu, args.var, sched, Capability(c, h, w))

    protocol.write_frame(out, protocol.MSG_HELLO_ACK)
    while True:
        try:
            msg_type, payload = protocol.read_frame(stdin_fd, timeout=args.idle_timeout)
        except ProtocolError as exc:
            return _fail(out, f"bad frame: {exc}")
        if msg_type == protocol.MSG_SHUTDOWN:
            return 0
        if msg_type != protocol.MSG_EPS_REQ:
            return _fail(out, f"expected EPS_REQ or SHUTDOWN, got 0x{msg_type:02x}")
        try:
            t, x_t = protocol.unpack_eps_req(payload, (c, h, w))
            eps = denoiser.predict_epsilon(x_t, t)
        except (ProtocolError, ValueError) as exc:
            return _fail(out, f"bad EPS_REQ: {exc}")
        protocol.write_frame(out, protocol.MSG_EPS_RESP, protocol.pack_eps_resp(eps))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="FDN1 loopback denoiser worker")
    parser.add_argument("--mode", choices=("oracle", "gaussian"), required=True)
    parser.add_argument("--ref", help="reference PNG for oracle mode")
    parser.add_argument("--mu", type=float, default=0.0, help="gaussian prior mean")
    parser.add_argument("--var", type=float, default=1.0, help="gaussian prior variance")
    parser.add_argument(
        "--idle-timeout", type=float, default=120.0,
        help="seconds to wait for a frame before giving up (never hang)",
    )
    args = parser.parse_args(argv)
    if args.mode == "oracle" and not args.ref:
        parser.error("--mode oracle requires --ref")
    return serve(sys.stdin.fileno(), sys.stdout.buffer, args)


if __name__ == "__main__":
    sys.exit(main())
