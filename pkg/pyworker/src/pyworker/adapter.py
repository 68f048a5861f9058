"""Adapter point for a real pretrained DDPM.

To serve an actual model, implement predict_epsilon below (or point
--mode adapter at your own module exposing the same signature) and keep
everything else as is: the serve loop handles framing, handshakes, and
shape checks. Weights and model runtimes are intentionally not shipped.
"""

from __future__ import annotations

import numpy as np


def predict_epsilon(x_t: np.ndarray, t: int) -> np.ndarray:
    """Return the predicted noise for x_t at timestep t.

    x_t arrives as a (C, H, W) float64 array decoded from the wire; the
    return value must be the same shape and is truncated to float32 for
    transport.
    """
    raise NotImplementedError("plug a pretrained DDPM in pyworker/adapter.py")
