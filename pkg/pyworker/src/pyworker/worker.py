"""FDN1 worker: epsilon prediction over stdin/stdout frames.

Modes:
  oracle    closed-form inversion of the forward process against a
            reference PNG: eps = (x_t - sqrt(abar_t) ref) / sqrt(1-abar_t)
  gaussian  conjugate-Gaussian posterior mean under a N(mu, var) pixel prior
  adapter   whatever pyworker.adapter.predict_epsilon implements

The engine is the client: it sends HELLO with the schedule betas
(float32) and the tensor shape, then one EPS_REQ at a time. Malformed
frames produce an ERROR frame and a nonzero exit; reads are bounded by
--idle-timeout so a dead or fuzzing peer can never hang the process.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
from PIL import Image

from . import adapter, framing
from .framing import FrameError


def load_reference(path: str) -> np.ndarray:
    """8-bit grayscale/RGB PNG to a (C, H, W) float tensor, v/127.5 - 1."""
    img = Image.open(path)
    img.load()
    if img.mode not in ("L", "RGB"):
        raise ValueError(f"unsupported image mode {img.mode} (need 8-bit L or RGB)")
    arr = np.asarray(img, dtype=np.uint8)
    arr = arr[None, :, :] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return np.asarray(arr, dtype=np.float64) / 127.5 - 1.0


class Session:
    def __init__(self, mode: str, args, shape, betas):
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie in (0, 1)")
        self.T = len(betas)
        self.shape = shape
        self.alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        self.mode = mode
        if mode == "oracle":
            self.ref = load_reference(args.ref)
            if self.ref.shape != shape:
                raise ValueError(
                    f"reference shape {self.ref.shape} != session shape {shape}"
                )
        else:
            self.mu = args.mu
            self.var = args.var

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        abar = float(self.alpha_bars[t])
        if self.mode == "oracle":
            return (x_t - np.sqrt(abar) * self.ref) / np.sqrt(1.0 - abar)
        if self.mode == "gaussian":
            denom = (1.0 - abar) + abar * self.var
            x0_mean = ((1.0 - abar) * self.mu + np.sqrt(abar) * self.var * x_t) / denom
            return (x_t - np.sqrt(abar) * x0_mean) / np.sqrt(1.0 - abar)
        return adapter.predict_epsilon(x_t, t)


def serve(fd_in: int, out, args) -> int:
    def fail(message: str) -> int:
        try:
            framing.write_frame(out, framing.ERROR, message.encode("utf-8"))
        except OSError:
            pass
        return 1

    try:
        msg_type, payload = framing.read_frame(fd_in, timeout=args.idle_timeout)
    except FrameError as exc:
        return fail(f"bad first frame: {exc}")
    if msg_type != framing.HELLO:
        return fail(f"expected HELLO before anything else, got 0x{msg_type:02x}")
    try:
        _, shape, betas = framing.parse_hello(payload)
        session = Session(args.mode, args, shape, betas)
    except (FrameError, ValueError, OSError) as exc:
        return fail(f"bad HELLO: {exc}")

    framing.write_frame(out, framing.HELLO_ACK)
    while True:
        try:
            msg_type, payload = framing.read_frame(fd_in, timeout=args.idle_timeout)
        except FrameError as exc:
            return fail(f"bad frame: {exc}")
        if msg_type == framing.SHUTDOWN:
            return 0
        if msg_type != framing.EPS_REQ:
            return fail(f"expected EPS_REQ or SHUTDOWN, got 0x{msg_type:02x}")
        try:
            t, x_t = framing.parse_eps_req(payload, session.shape)
            eps = session.predict(x_t, t)
        except (FrameError, ValueError, NotImplementedError) as exc:
            return fail(f"cannot answer EPS_REQ: {exc}")
        framing.write_frame(out, framing.EPS_RESP, framing.pack_eps_resp(eps))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pyworker",
                                     description="FDN1 denoiser worker")
    parser.add_argument("--mode", choices=("oracle", "gaussian", "adapter"),
                        required=True)
    parser.add_argument("--ref", help="reference PNG (oracle mode)")
    parser.add_argument("--mu", type=float, default=0.0)
    parser.add_argument("--var", type=float, default=1.0)
    parser.add_argument("--idle-timeout", type=float, default=30.0,
                        help="max seconds to wait for the next frame")
    args = parser.parse_args(argv)
    if args.mode == "oracle" and not args.ref:
        parser.error("--mode oracle requires --ref")
    return serve(sys.stdin.fileno(), sys.stdout.buffer, args)


if __name__ == "__main__":
    sys.exit(main())
