"""Accumulation dynamics of one arterial subregion.

A subregion is described by a speed macroscopic fundamental diagram
v(n) = v_f * exp(-xi * (n / n_cr)^gamma); production v(n) * n divided by the
average trip length of a path class gives the trip completion rate of that
class. Per-route accumulations share the region speed, so a route's
completion rate is simply n_y * v(n) / ATL of its path class.

Vehicles leave a region through exactly one of three gates depending on the
route: trip completion inside the region, a perimeter-controlled boundary
crossing into the neighbour region, or a transfer onto an expressway
on-ramp limited by the ramp cell's receiving capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expressway import proportional_flow_split

# Path-class keys: entry point -> exit point of a route's leg inside a region.
# "int" stands for an interior origin or destination, "bnd" for the boundary
# with the neighbour region, "ramp" for an expressway on-/off-ramp mouth.
TRIP_LENGTH_KEYS = ("int-int", "int-bnd", "bnd-int", "int-ramp", "bnd-ramp", "ramp-bnd")


@dataclass(frozen=True)
class MfdParams:
    """Speed-MFD and boundary parameters of one subregion (SI units)."""

    free_flow_speed: float  # m/s
    shape_xi: float
    shape_gamma: float
    critical_accumulation: float  # veh
    jam_accumulation: float  # veh
    max_boundary_receiving: float  # veh/s

    def __post_init__(self) -> None:
        if self.free_flow_speed <= 0:
            raise ValueError("free_flow_speed must be positive")
        if self.shape_xi <= 0 or self.shape_gamma <= 0:
            raise ValueError("MFD shape parameters must be positive")
        if not 0 < self.critical_accumulation < self.jam_accumulation:
            raise ValueError("need 0 < critical_accumulation < jam_accumulation")
        if self.max_boundary_receiving <= 0:
            raise ValueError("max_boundary_receiving must be positive")


@dataclass(frozen=True)
class TripLengthTable:
    """Average trip length (m) per path class inside one subregion."""

    lengths: Mapping[str, float]

    def __post_init__(self) -> None:
        for key in TRIP_LENGTH_KEYS:
            if key not in self.lengths:
                raise ValueError(f"trip length table missing path class '{key}'")
            if self.lengths[key] <= 0:
                raise ValueError(f"trip length for '{key}' must be positive")

    def __getitem__(self, key: str) -> float:
        return self.lengths[key]


@dataclass
class SubregionState:
    """Per-route vehicle accumulations (veh), last axis is the route legs."""

    n: np.ndarray

    def copy(self) -> "SubregionState":
        return SubregionState(self.n.copy())

    @property
    def total(self) -> np.ndarray:
        return self.n.sum(axis=-1)


def subregion_speed(total_accumulation: np.ndarray | float, params: MfdParams) -> np.ndarray:
    """Region speed v(n) = v_f * exp(-xi * (n / n_cr)^gamma), strictly decreasing."""
    n = np.asarray(total_accumulation, dtype=float)
    ratio = np.maximum(n, 0.0) / params.critical_accumulation
    return params.free_flow_speed * np.exp(-params.shape_xi * ratio**params.shape_gamma)


def completion_rates(
    per_route_accumulation: np.ndarray,
    params: MfdParams,
    trip_lengths: np.ndarray,
) -> np.ndarray:
    """Unrestricted trip completion rate per route leg (veh/s).

    rate_y = (n_y / n) * P(n) / ATL_y with P(n) = v(n) * n, which reduces to
    n_y * v(n) / ATL_y. Zero total accumulation gives zero rates.
    """
    n = np.asarray(per_route_accumulation, dtype=float)
    v = subregion_speed(n.sum(axis=-1), params)
    return n * v[..., None] / trip_lengths


def limited_boundary_transfer(
    wanted: np.ndarray,
    perimeter_rate: np.ndarray | float,
    receiver_total_accumulation: np.ndarray | float,
    receiver_params: MfdParams,
) -> np.ndarray:
    """Admitted boundary flow per route.

    admitted_y = min(u * M_y, (M_y / sum(M)) * c_max * (1 - n_j / n_j_max)).
    The perimeter gate and the receiver supply act independently; the supply
    share is proportional to the ungated demand M_y.
    """
    wanted = np.asarray(wanted, dtype=float)
    supply = boundary_receiving(receiver_total_accumulation, receiver_params)
    share = proportional_flow_split(wanted, supply)
    u = np.asarray(perimeter_rate, dtype=float)
    return np.minimum(u[..., None] * wanted, share)


def boundary_receiving(
    receiver_total_accumulation: np.ndarray | float, receiver_params: MfdParams
) -> np.ndarray:
    """Receiver-side supply c_max * (1 - n / n_max), floored at zero."""
    n = np.asarray(receiver_total_accumulation, dtype=float)
    frac = 1.0 - n / receiver_params.jam_accumulation
    return receiver_params.max_boundary_receiving * np.maximum(0.0, frac)


def limited_ramp_transfer(wanted: np.ndarray, on_ramp_receiving: np.ndarray | float) -> np.ndarray:
    """Admitted subregion -> on-ramp flow: FIFO share of the ramp receiving."""
    return proportional_flow_split(np.asarray(wanted, dtype=float), on_ramp_receiving)


def step_subregion(
    state: SubregionState,
    inflows: np.ndarray,
    admitted_outflows: np.ndarray,
    dt: float,
) -> SubregionState:
    """Forward Euler accumulation update; outflows must already be feasible
    (capped at n_y / dt by the caller), the floor only absorbs rounding."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_new = state.n + dt * (np.asarray(inflows, dtype=float) - np.asarray(admitted_outflows, dtype=float))
    return SubregionState(np.maximum(0.0, n_new))
