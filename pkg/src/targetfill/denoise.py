"""Denoiser backends and the DDPM reverse step.

A denoiser predicts the noise epsilon that produced x_t; the engine owns
all sampling randomness, so every backend is a deterministic function of
(x_t, t). Two closed-form backends make the whole pipeline verifiable:

  OracleDenoiser           inverts the forward identity for a known
                           reference image, eps = (x_t - sqrt(abar) ref)
                           / sqrt(1 - abar).
  AnalyticGaussianDenoiser exact posterior mean under a per-pixel Gaussian
                           prior N(mu0, var0), for statistical tests.

ExternalDenoiser drives a spawned worker process over the FDN1 protocol
(see protocol.py) and is how a real pretrained model plugs in.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass

import numpy as np

from . import protocol
from .core import NoiseSchedule, SeededRng
from .protocol import ProtocolError


class DenoiserError(RuntimeError):
    """Backend failure: worker crash, protocol violation, bad output."""


@dataclass(frozen=True)
class Capability:
    channels: int
    height: int
    width: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


def _check_input(shape, x_t: np.ndarray, t: int, T: int) -> None:
    if x_t.shape != shape:
        raise ValueError(f"input shape {x_t.shape} does not match capability {shape}")
    if not 1 <= t <= T:
        raise ValueError(f"timestep {t} outside [1, {T}]")


class OracleDenoiser:
    """Noise estimate that exactly inverts the forward pass of x_ref."""

    def __init__(self, x_ref: np.ndarray, sched: NoiseSchedule):
        self.x_ref = np.asarray(x_ref, dtype=np.float64)
        self.sched = sched
        self.capability = Capability(*self.x_ref.shape)

    def predict_epsilon(self, x_t: np.ndarray, t: int) -> np.ndarray:
        _check_input(self.x_ref.shape, x_t, t, self.sched.T)
        abar = self.sched.alpha_bar(t)
        return (x_t - np.sqrt(abar) * self.x_ref) / np.sqrt(1.0 - abar)


class AnalyticGaussianDenoiser:
    """Conjugate-Gaussian posterior-mean denoiser.

    With prior x0 ~ N(mu0, var0) per pixel and x_t = sqrt(abar) x0 +
    sqrt(1-abar) eps, the posterior mean is

        E[x0 | x_t] = ((1-abar) mu0 + sqrt(abar) var0 x_t)
                      / ((1-abar) + abar var0)

    and epsilon is recovered from the forward identity at that mean.
    var0 -> 0 degenerates to an OracleDenoiser with constant reference mu0.
    """

    def __init__(self, mu0: float, var0: float, sched: NoiseSchedule,
                 capability: Capability):
        if var0 < 0:
            raise ValueError(f"var0 must be >= 0, got {var0}")
        self.mu0 = float(mu0)
        self.var0 = float(var0)
        self.sched = sched
        self.capability = capability

    def predict_epsilon(self, x_t: np.ndarray, t: int) -> np.ndarray:
        _check_input(self.capability.shape, x_t, t, self.sched.T)
        abar = self.sched.alpha_bar(t)
        denom = (1.0 - abar) + abar * self.var0
        x0_mean = ((1.0 - abar) * self.mu0 + np.sqrt(abar) * self.var0 * x_t) / denom
        return (x_t - np.sqrt(abar) * x0_mean) / np.sqrt(1.0 - abar)


def reverse_step(
    denoiser,
    x_t: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: SeededRng,
    purpose: str = "ddpm",
) -> np.ndarray:
    """One DDPM posterior step x_t -> x_{t-1}.

        mu = (x_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(1 - beta_t)
        x_{t-1} = mu + sqrt(posterior_var_t) * z

    posterior_var_1 = 0, so the final step is deterministic.
    """
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    eps = denoiser.predict_epsilon(x_t, t)
    beta = sched.beta(t)
    abar = sched.alpha_bar(t)
    mean = (x_t - beta / np.sqrt(1.0 - abar) * eps) / np.sqrt(1.0 - beta)
    var = sched.posterior_var(t)
    if var == 0.0:
        return mean
    z = rng.normal(purpose, t, np.shape(x_t))
    return mean + np.sqrt(var) * z


class ExternalDenoiser:
    """Client end of the FDN1 worker protocol.

    One request in flight at a time; the session is exclusive to one run.
    Protocol violations abort the session (the worker is killed).
    """

    def __init__(self, proc: subprocess.Popen, sched: NoiseSchedule,
                 capability: Capability, timeout: float):
        self.proc = proc
        self.sched = sched
        self.capability = capability
        self.timeout = timeout
        self._closed = False

    def predict_epsilon(self, x_t: np.ndarray, t: int) -> np.ndarray:
        shape = self.capability.shape
        _check_input(shape, x_t, t, self.sched.T)
        if self._closed:
            raise DenoiserError("session already closed")
        try:
            protocol.write_frame(
                self.proc.stdin, protocol.MSG_EPS_REQ, protocol.pack_eps_req(t, x_t)
            )
            msg_type, payload = protocol.read_frame(
                self.proc.stdout.fileno(), timeout=self.timeout
            )
        except (ProtocolError, OSError) as exc:
            self._abort()
            raise DenoiserError(f"worker transport failed: {exc}") from exc
        if msg_type == protocol.MSG_ERROR:
            self._abort()
            raise DenoiserError(f"worker error: {payload.decode('utf-8', 'replace')}")
        if msg_type != protocol.MSG_EPS_RESP:
            self._abort()
            raise DenoiserError(f"expected EPS_RESP, got type 0x{msg_type:02x}")
        try:
            eps = protocol.unpack_eps_resp(payload, shape)
        except ProtocolError as exc:
            self._abort()
            raise DenoiserError(str(exc)) from exc
        if not np.all(np.isfinite(eps)):
            self._abort()
            raise DenoiserError("worker returned non-finite epsilon")
        return eps

    def close(self) -> None:
        """Send SHUTDOWN and reap the worker."""
        if self._closed:
            return
        self._closed = True
        try:
            protocol.write_frame(self.proc.stdin, protocol.MSG_SHUTDOWN)
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()

    def _abort(self) -> None:
        self._closed = True
        self.proc.kill()
        self.proc.wait()

    def __enter__(self) -> "ExternalDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            if not self._closed:
                self.close()
        except Exception:
            pass


def external_handshake(
    worker_cmd,
    sched: NoiseSchedule,
    capability: Capability,
    timeout: float = 30.0,
) -> ExternalDenoiser:
    """Spawn a worker and perform the HELLO / HELLO_ACK exchange.

    worker_cmd is an argv list or a shell-style string. The schedule's
    betas are transmitted as float32, so the worker sees (and should
    compute with) the quantized values.
    """
    argv = shlex.split(worker_cmd) if isinstance(worker_cmd, str) else list(worker_cmd)
    try:
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
    except OSError as exc:
        raise DenoiserError(f"failed to spawn worker {argv!r}: {exc}") from exc
    hello = protocol.pack_hello(
        sched.T, capability.channels, capability.height, capability.width, sched.betas
    )
    try:
        protocol.write_frame(proc.stdin, protocol.MSG_HELLO, hello)
        msg_type, payload = protocol.read_frame(proc.stdout.fileno(), timeout=timeout)
    except (ProtocolError, OSError) as exc:
        proc.kill()
        proc.wait()
        raise DenoiserError(f"handshake failed: {exc}") from exc
    if msg_type == protocol.MSG_ERROR:
        proc.kill()
        proc.wait()
        raise DenoiserError(f"worker rejected HELLO: {payload.decode('utf-8', 'replace')}")
    if msg_type != protocol.MSG_HELLO_ACK or payload:
        proc.kill()
        proc.wait()
        raise DenoiserError(f"expected empty HELLO_ACK, got type 0x{msg_type:02x}")
    return ExternalDenoiser(proc, sched, capability, timeout)
