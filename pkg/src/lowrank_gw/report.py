"""Per-iteration trace shared by every solver."""

import time
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveReport:
    """Outer-loop trace of a solve.

    Each list has one entry per completed outer iteration.  ``deltas`` holds
    the stationarity criterion of the iterate entering that iteration, or
    ``None`` where it is not computed.
    """

    losses: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    initial_loss: float = float("nan")
    stop_reason: str = "max_iter"
    init_fallback: bool = False

    @property
    def n_iter(self):
        return len(self.losses)

    @property
    def initial_gap(self):
        """Gap between the initial loss and the best loss seen (``D0``)."""
        if not self.losses:
            return 0.0
        return float(self.initial_loss - min(min(self.losses), self.initial_loss))

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else self.initial_loss

    @property
    def converged(self):
        return self.stop_reason != "max_iter"

    def rows(self):
        for k in range(self.n_iter):
            yield k + 1, self.losses[k], self.deltas[k], self.inner_iterations[k], self.elapsed_ms[k]


class _Clock:
    def __init__(self):
        self.start = time.monotonic()

    def ms(self):
        return round((time.monotonic() - self.start) * 1000.0, 3)


def relative_change(prev, cur):
    return abs(cur - prev) / max(abs(prev), abs(cur), np.finfo(float).tiny)
