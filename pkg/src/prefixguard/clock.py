"""Clock abstractions so the engine never reads wall-clock time directly."""

from __future__ import annotations

import time


class WallClock:
    def now(self) -> float:
        return time.time()


class ManualClock:
    """Clock driven by the caller: replay traces and the simulator set it."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def set(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"clock cannot go backwards ({t} < {self._now})")
        self._now = float(t)

    def advance(self, dt: float) -> None:
        self.set(self._now + dt)
