"""Twin-column alternation for continuous capture.

One column loads while the other runs the purification steps; loading and
purification are sized to take the same time, so when the clock reaches the
phase duration the roles swap atomically and the clock carries its
remainder into the next phase.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

_CLOCK_TOL = 1e-9  # absorbs float accumulation across arbitrary tick splits


@dataclass(frozen=True)
class TwinColumnSchedule:
    load_duration: float       # minutes; equals the purification duration
    clock: float = 0.0
    loading_column: int = 0    # index of the column currently loading

    def __post_init__(self):
        if self.load_duration <= 0.0:
            raise ValueError("phase duration must be positive")
        if self.loading_column not in (0, 1):
            raise ValueError("loading_column must be 0 or 1")


def twin_column_tick(
    sched: TwinColumnSchedule, dt: float
) -> tuple[TwinColumnSchedule, int]:
    """Advance the phase clock by ``dt`` minutes and swap roles on expiry.

    Returns the updated schedule and the number of swaps that fired (a tick
    may span several phases).  Exactly one column loads at any time, so a
    swap is a pure role exchange.
    """
    if dt <= 0.0:
        raise ValueError("tick duration must be positive")
    clock = sched.clock + dt
    column = sched.loading_column
    swaps = 0
    while clock >= sched.load_duration - _CLOCK_TOL:
        clock -= sched.load_duration
        column = 1 - column
        swaps += 1
    clock = max(clock, 0.0)
    return replace(sched, clock=clock, loading_column=column), swaps
