"""Time-varying origin-destination demand.

Each OD class carries a piecewise-linear rate profile (veh/s over time in
seconds). Trapezoids (ramp up / hold / ramp down) are the common case and
have a dedicated constructor. Profiles are sampled once onto the simulation
clock; beyond the last breakpoint the final value is held.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PiecewiseLinear:
    """Breakpoints (t_i, v_i) with linear interpolation, t strictly increasing."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("times and values must be equal-length, non-empty")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValueError("demand rates must be >= 0")

    def sample(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.values)


def trapezoid(start: float, ramp_up_end: float, hold_end: float, end: float, peak: float) -> PiecewiseLinear:
    """0 until start, linear to peak at ramp_up_end, hold to hold_end, back to 0 at end."""
    if not start < ramp_up_end <= hold_end < end:
        raise ValueError("need start < ramp_up_end <= hold_end < end")
    times = [start, ramp_up_end, hold_end, end]
    values = [0.0, peak, peak, 0.0]
    if start > 0:
        times.insert(0, 0.0)
        values.insert(0, 0.0)
    # collapse duplicate breakpoint when there is no hold
    if ramp_up_end == hold_end:
        i = times.index(hold_end)
        del times[i], values[i]
    return PiecewiseLinear(tuple(times), tuple(values))


@dataclass(frozen=True)
class DemandProfile:
    """Per-OD demand rates keyed by OD class id (e.g. "1-2", "E12-E12")."""

    profiles: dict[str, PiecewiseLinear]

    def sample_table(self, od_order: tuple[str, ...], n_steps: int, dt: float) -> np.ndarray:
        """Rates at each step start, shape (n_steps, n_od); missing ODs are zero."""
        t = np.arange(n_steps) * dt
        out = np.zeros((n_steps, len(od_order)))
        for i, od in enumerate(od_order):
            prof = self.profiles.get(od)
            if prof is not None:
                out[:, i] = prof.sample(t)
        return out
