"""Blend-weight schedules and the resampling/jumping timestep plan.

lambda_t weights the denoiser output against the forward-noised target in
the hole (1 = pure denoiser, 0 = pure target). The piecewise schedule is 1
for t <= p*T and interpolates linearly down to 0 at t = T, so late (noisy)
steps trust the target and the final steps let the denoiser integrate it
into the scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal


@dataclass(frozen=True)
class LambdaSchedule:
    kind: Literal["constant", "piecewise"]
    lambda0: float = 1.0
    p: float = 0.5
    T: int = 0

    @staticmethod
    def constant(lambda0: float) -> "LambdaSchedule":
        if not 0.0 <= lambda0 <= 1.0:
            raise ValueError(f"lambda0 must be in [0, 1], got {lambda0}")
        return LambdaSchedule(kind="constant", lambda0=float(lambda0))

    @staticmethod
    def piecewise(p: float, T: int) -> "LambdaSchedule":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        return LambdaSchedule(kind="piecewise", p=float(p), T=int(T))


def lambda_eval(sched: LambdaSchedule, t: int) -> float:
    """Blend weight at timestep t; always in [0, 1]."""
    if sched.kind == "constant":
        return sched.lambda0
    if not 0 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [0, {sched.T}]")
    knee = sched.p * sched.T
    if t <= knee:
        # p=1 puts t=T on the knee itself, so the degenerate interpolation
        # interval never divides by zero.
        return 1.0
    return (sched.T - t) / (sched.T - knee)


@dataclass(frozen=True)
class Move:
    kind: Literal["down", "up"]
    t: int  # destination timestep


@dataclass(frozen=True)
class TimestepPlan:
    """Ordered +-1 moves from T down to 0, with resampling excursions."""

    T: int
    moves: tuple[Move, ...]

    @property
    def visited(self) -> list[int]:
        return [m.t for m in self.moves]

    @property
    def down_count(self) -> int:
        return sum(1 for m in self.moves if m.kind == "down")

    @property
    def up_count(self) -> int:
        return sum(1 for m in self.moves if m.kind == "up")

    def to_json(self) -> str:
        return json.dumps(
            {
                "visited": self.visited,
                "down_count": self.down_count,
                "up_count": self.up_count,
            }
        )


def jump_plan(T: int, j: int, r: int) -> TimestepPlan:
    """Descent from T to 0 with r-fold resampling every j steps.

    Whenever a down move lands on an anchor (t > 0, t divisible by j, and
    t + j <= T so the excursion stays inside the schedule) that has fewer
    than r-1 jumps taken, the plan climbs j steps back up and re-descends,
    so the window above each anchor passes through the denoiser r times.
    With r = j = 1 this collapses to the plain DDPM descent.
    """
    if T < 1 or j < 1 or r < 1:
        raise ValueError(f"T, j, r must all be >= 1, got ({T}, {j}, {r})")
    moves: list[Move] = []
    jumps_taken: dict[int, int] = {}
    t = T
    while t > 0:
        t -= 1
        moves.append(Move("down", t))
        if t > 0 and t % j == 0 and t + j <= T and jumps_taken.get(t, 0) < r - 1:
            jumps_taken[t] = jumps_taken.get(t, 0) + 1
            for _ in range(j):
                t += 1
                moves.append(Move("up", t))
    return TimestepPlan(T=T, moves=tuple(moves))


def denoiser_call_count(T: int, j: int, r: int) -> int:
    """Number of denoiser invocations a run with this plan performs."""
    return jump_plan(T, j, r).down_count
