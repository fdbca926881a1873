"""Multi-class cell transmission model for one directed expressway.

Units are SI throughout: m, s, veh, veh/m, veh/s. Scenario files use km/h
and veh/h and are converted on load.

Densities are tracked per route (last axis) so flows can be split under the
first-in-first-out rule: whenever a supply constraint binds, per-route flows
keep the ratios of the per-route demands. All arrays accept an arbitrary
number of leading batch axes, which lets a swarm of candidate rollouts be
advanced in a single vectorized call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class InvariantViolation(RuntimeError):
    """A physical state invariant was broken (negative or over-jam density)."""


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular fundamental diagram for one cell class (mainline or ramp).

    capacity is per direction over all lanes. The bottleneck fields describe
    the linear capacity drop of merging cells: once total density exceeds
    bottleneck_critical_density, the maximum outflow falls linearly, down to
    bottleneck_capacity * (1 - capacity_drop_lambda) at jam density. They are
    only consulted for cells flagged as merging bottlenecks.
    """

    free_flow_speed: float  # m/s
    capacity: float  # veh/s
    jam_density: float  # veh/m
    bottleneck_capacity: Optional[float] = None  # veh/s
    capacity_drop_lambda: float = 0.0

    def __post_init__(self) -> None:
        if self.free_flow_speed <= 0:
            raise ValueError("free_flow_speed must be positive")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.jam_density <= self.critical_density:
            raise ValueError(
                "jam_density must exceed critical_density "
                f"({self.jam_density} <= {self.critical_density})"
            )
        if self.wave_speed > self.free_flow_speed + 1e-12:
            raise ValueError(
                "wave_speed exceeds free_flow_speed; jam density too close to critical"
            )
        if not 0.0 <= self.capacity_drop_lambda <= 1.0:
            raise ValueError("capacity_drop_lambda must lie in [0, 1]")
        if self.bottleneck_capacity is not None:
            if self.bottleneck_capacity <= 0:
                raise ValueError("bottleneck_capacity must be positive")
            if self.bottleneck_critical_density >= self.jam_density:
                raise ValueError("bottleneck critical density must be below jam density")

    @property
    def critical_density(self) -> float:
        return self.capacity / self.free_flow_speed

    @property
    def wave_speed(self) -> float:
        return self.capacity / (self.jam_density - self.critical_density)

    @property
    def bottleneck_critical_density(self) -> float:
        if self.bottleneck_capacity is None:
            raise ValueError("fundamental diagram has no bottleneck parameters")
        return self.bottleneck_capacity / self.free_flow_speed

    @property
    def has_bottleneck(self) -> bool:
        return self.bottleneck_capacity is not None


@dataclass(frozen=True)
class ExpresswayTopology:
    """Cell layout of one directed expressway.

    Ramp cell indices are 1-based. Each of the two subregions contributes one
    on-ramp (merge cell) and one off-ramp (diverge cell); within a subregion
    the off-ramp sits upstream of the on-ramp. A mainline cell hosts at most
    one ramp.
    """

    name: str
    cell_count: int
    cell_length: float  # m
    on_ramp_cells: tuple[int, int]  # merge cell per region (1-based)
    off_ramp_cells: tuple[int, int]  # diverge cell per region (1-based)

    def __post_init__(self) -> None:
        if self.cell_count < 1:
            raise ValueError(f"{self.name}: cell_count must be >= 1")
        if self.cell_length <= 0:
            raise ValueError(f"{self.name}: cell_length must be positive")
        ramps = list(self.on_ramp_cells) + list(self.off_ramp_cells)
        for idx in ramps:
            if not 1 <= idx <= self.cell_count:
                raise ValueError(f"{self.name}: ramp cell {idx} outside [1, {self.cell_count}]")
        if len(set(ramps)) != len(ramps):
            raise ValueError(f"{self.name}: a mainline cell hosts more than one ramp")
        for region in (0, 1):
            if not self.off_ramp_cells[region] < self.on_ramp_cells[region]:
                raise ValueError(
                    f"{self.name}: off-ramp of region {region + 1} must sit upstream "
                    "of its on-ramp"
                )


@dataclass(frozen=True)
class ExpresswayRouting:
    """Entry and exit structure of the routes travelling this expressway.

    entry_ramp_region[r] is the region whose on-ramp route r uses to enter,
    or -1 if it enters at the first cell. exit_ramp_region[r] is the region
    whose off-ramp it leaves through, or -1 if it runs to the terminal cell.
    terminates_at_exit[r] marks trips that end right at the off-ramp exit
    (destination reached); the rest continue into the receiving subregion.
    """

    route_ids: tuple[str, ...]
    entry_ramp_region: tuple[int, ...]
    exit_ramp_region: tuple[int, ...]
    terminates_at_exit: tuple[bool, ...]

    def __post_init__(self) -> None:
        n = len(self.route_ids)
        if not (len(self.entry_ramp_region) == len(self.exit_ramp_region) == n):
            raise ValueError("routing arrays must have one entry per route")
        for r in range(n):
            if self.exit_ramp_region[r] == -1 and self.terminates_at_exit[r]:
                raise ValueError(f"route {self.route_ids[r]}: terminal exit cannot terminate at a ramp")


@dataclass
class ExpresswayState:
    """Per-route densities (veh/m) for one travel direction.

    k_main: (..., L, R); k_on, k_off: (..., 2, R) indexed by region.
    """

    k_main: np.ndarray
    k_on: np.ndarray
    k_off: np.ndarray

    def copy(self) -> "ExpresswayState":
        return ExpresswayState(self.k_main.copy(), self.k_on.copy(), self.k_off.copy())

    def validate(self, fd_main: FundamentalDiagram, fd_ramp: FundamentalDiagram, label: str = "") -> None:
        tol = 1e-9
        for name, arr in (("mainline", self.k_main), ("on-ramp", self.k_on), ("off-ramp", self.k_off)):
            if np.any(arr < -tol):
                where = np.unravel_index(int(np.argmin(arr)), arr.shape)
                raise InvariantViolation(f"{label}: negative {name} density at index {where}")
        for name, arr, fd in (
            ("mainline", self.k_main, fd_main),
            ("on-ramp", self.k_on, fd_ramp),
            ("off-ramp", self.k_off, fd_ramp),
        ):
            total = arr.sum(axis=-1)
            if np.any(total > fd.jam_density * (1 + 1e-9) + tol):
                where = np.unravel_index(int(np.argmax(total)), total.shape)
                raise InvariantViolation(
                    f"{label}: {name} density {float(total[where]):.6g} veh/m exceeds "
                    f"jam density {fd.jam_density:.6g} at index {where}"
                )


@dataclass
class ExpresswayFlows:
    """Realized rates (veh/s) of one synchronous step, all from the pre-step state."""

    first_cell: np.ndarray  # (..., R) admitted exogenous inflow into cell 1
    terminal: np.ndarray  # (..., R) outflow past the last cell
    mainline: np.ndarray  # (..., L, R) cell-to-cell through flow
    ramp_discharge: np.ndarray  # (..., 2, R) metered on-ramp -> merge cell flow
    diverge: np.ndarray  # (..., 2, R) mainline -> off-ramp diversion
    off_discharge: np.ndarray  # (..., 2, R) off-ramp -> subregion (or trip end)
    vehicles_before: np.ndarray  # (...,) vehicles stored at the step start


def _fifo(demands: np.ndarray, supply: np.ndarray) -> np.ndarray:
    # proportional_flow_split without input coercion, for the hot loop
    total = demands.sum(axis=-1)
    binding = total > supply
    scale = np.where(binding, supply / np.where(binding, total, 1.0), 1.0)
    return demands * scale[..., None]


def proportional_flow_split(demands: np.ndarray, supply: np.ndarray | float) -> np.ndarray:
    """Cap total flow at `supply`, splitting proportionally to per-route demand.

    Equals min(d_y, d_y / sum(d) * supply) per route: when the supply binds,
    every route is scaled by the same factor, so flow ratios equal demand
    ratios. Zero total demand yields zero flows without division.
    """
    return _fifo(np.asarray(demands, dtype=float), np.asarray(supply, dtype=float))


def cell_demand(
    per_route_density: np.ndarray,
    fd: FundamentalDiagram,
    is_bottleneck: np.ndarray | bool = False,
    total_density: np.ndarray | float | None = None,
) -> np.ndarray:
    """Traffic demand of a cell per route: min(v_f * k_y, effective capacity).

    For merging bottleneck cells the capacity is the density-dependent
    reduced value, evaluated from the cell's total density.
    """
    per_route_density = np.asarray(per_route_density, dtype=float)
    cap = effective_capacity(fd, is_bottleneck, total_density)
    return np.minimum(fd.free_flow_speed * per_route_density, cap[..., None])


def cell_receiving(
    total_density: np.ndarray | float,
    fd: FundamentalDiagram,
    is_bottleneck: np.ndarray | bool = False,
) -> np.ndarray:
    """Receiving capacity of a cell: min(w * (k_jam - k), effective capacity)."""
    total_density = np.asarray(total_density, dtype=float)
    if np.any(total_density > fd.jam_density * (1 + 1e-9) + 1e-12):
        raise InvariantViolation(
            f"density {float(np.max(total_density)):.6g} veh/m exceeds jam density "
            f"{fd.jam_density:.6g}"
        )
    cap = effective_capacity(fd, is_bottleneck, total_density)
    room = np.maximum(0.0, fd.wave_speed * (fd.jam_density - total_density))
    return np.minimum(room, cap)


def effective_capacity(
    fd: FundamentalDiagram,
    is_bottleneck: np.ndarray | bool,
    total_density: np.ndarray | float | None,
) -> np.ndarray:
    mask = np.asarray(is_bottleneck, dtype=bool)
    if not mask.any():
        shape = np.shape(total_density) if total_density is not None else mask.shape
        return np.full(shape, fd.capacity)
    if not fd.has_bottleneck:
        raise ValueError("cell flagged as bottleneck but fundamental diagram has no bottleneck parameters")
    if total_density is None:
        raise ValueError("total_density required to evaluate a bottleneck capacity")
    reduced = bottleneck_max_outflow(np.asarray(total_density, dtype=float), fd)
    return np.where(mask, reduced, fd.capacity)


def bottleneck_max_outflow(total_density: np.ndarray | float, fd: FundamentalDiagram) -> np.ndarray:
    """Capacity-drop law of a merging cell.

    Full bottleneck capacity up to the bottleneck critical density, then a
    linear decrease reaching a fraction (1 - lambda) of it at jam density.
    """
    k = np.asarray(total_density, dtype=float)
    cb = fd.bottleneck_capacity
    if cb is None:
        raise ValueError("fundamental diagram has no bottleneck parameters")
    kcb = fd.bottleneck_critical_density
    dropped = cb * (1.0 - fd.capacity_drop_lambda * (k - kcb) / (fd.jam_density - kcb))
    return np.minimum(cb, dropped)


def on_ramp_flow(per_route_demand: np.ndarray, downstream_receiving: np.ndarray | float) -> np.ndarray:
    """Unmetered on-ramp flow into its merge cell (FIFO share of the receiving)."""
    return proportional_flow_split(per_route_demand, downstream_receiving)


def mainline_flow(
    per_route_demand: np.ndarray,
    downstream_receiving: np.ndarray | float,
    metered_ramp_inflow: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Mainline through flow; the metered ramp inflow is served first when the
    downstream cell is a merge, so the mainline competes for the residual."""
    residual = np.maximum(0.0, np.asarray(downstream_receiving, dtype=float) - metered_ramp_inflow)
    return proportional_flow_split(per_route_demand, residual)


def first_cell_inflow(per_route_demand: np.ndarray, first_cell_receiving: np.ndarray | float) -> np.ndarray:
    """Admission of exogenous demand into the first cell (FIFO share)."""
    return proportional_flow_split(per_route_demand, first_cell_receiving)


def cell_speed(total_density: np.ndarray | float, fd: FundamentalDiagram) -> np.ndarray:
    """Average cell speed: free-flow up to the critical density, then the
    congested-branch speed w * (k_jam - k) / k. Zero density maps to v_f."""
    k = np.asarray(total_density, dtype=float)
    safe = np.maximum(k, 1e-300)
    congested = fd.wave_speed * np.maximum(0.0, fd.jam_density - k) / safe
    return np.where(k <= fd.critical_density, fd.free_flow_speed, np.minimum(fd.free_flow_speed, congested))


class ExpresswayModel:
    """Binds topology, fundamental diagrams and routing; advances the CTM state.

    Merge cells are treated as capacity-drop bottlenecks whenever the mainline
    fundamental diagram carries bottleneck parameters.
    """

    def __init__(
        self,
        topology: ExpresswayTopology,
        fd_main: FundamentalDiagram,
        fd_ramp: FundamentalDiagram,
        routing: ExpresswayRouting,
    ) -> None:
        self.topology = topology
        self.fd_main = fd_main
        self.fd_ramp = fd_ramp
        self.routing = routing

        L = topology.cell_count
        R = len(routing.route_ids)
        self.n_routes = R
        self.on_cells0 = np.asarray(topology.on_ramp_cells, dtype=int) - 1
        self.off_cells0 = np.asarray(topology.off_ramp_cells, dtype=int) - 1

        self.merge_mask = np.zeros(L, dtype=bool)
        self.merge_mask[self.on_cells0] = fd_main.has_bottleneck
        self._bneck = fd_main.has_bottleneck

        entry = np.asarray(routing.entry_ramp_region, dtype=int)
        exit_ = np.asarray(routing.exit_ramp_region, dtype=int)
        self.enters_first = entry == -1
        self.exits_terminal = exit_ == -1
        self.terminates_at_exit = np.asarray(routing.terminates_at_exit, dtype=bool)
        # exit_mask_region[g, r]: route r leaves through region g's off-ramp
        self.exit_mask_region = np.stack([exit_ == 0, exit_ == 1])
        # entry_mask_region[g, r]: route r enters through region g's on-ramp
        self.entry_mask_region = np.stack([entry == 0, entry == 1])
        # exit_mask_cells[l, r]: route r diverts out of mainline cell l
        self.exit_mask_cells = np.zeros((L, R))
        for g in (0, 1):
            self.exit_mask_cells[self.off_cells0[g]] += self.exit_mask_region[g]

    def zero_state(self, batch_shape: tuple[int, ...] = ()) -> ExpresswayState:
        L, R = self.topology.cell_count, self.n_routes
        return ExpresswayState(
            k_main=np.zeros(batch_shape + (L, R)),
            k_on=np.zeros(batch_shape + (2, R)),
            k_off=np.zeros(batch_shape + (2, R)),
        )

    def on_ramp_receiving(self, state: ExpresswayState) -> np.ndarray:
        """Receiving capacity (veh/s) of the two on-ramp cells, by region."""
        return cell_receiving(state.k_on.sum(axis=-1), self.fd_ramp)

    def speeds(self, state: ExpresswayState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(mainline (..., L), on-ramp (..., 2), off-ramp (..., 2)) speeds in m/s."""
        v_main = cell_speed(state.k_main.sum(axis=-1), self.fd_main)
        v_on = cell_speed(state.k_on.sum(axis=-1), self.fd_ramp)
        v_off = cell_speed(state.k_off.sum(axis=-1), self.fd_ramp)
        return v_main, v_on, v_off

    def vehicles(self, state: ExpresswayState) -> np.ndarray:
        """Vehicles stored on the expressway including its ramp cells."""
        per_route = self.vehicles_per_route(state)
        return per_route.sum(axis=-1)

    def vehicles_per_route(self, state: ExpresswayState) -> np.ndarray:
        ls = self.topology.cell_length
        return ls * (
            state.k_main.sum(axis=-2) + state.k_on.sum(axis=-2) + state.k_off.sum(axis=-2)
        )

    def step(
        self,
        state: ExpresswayState,
        ramp_transfer_in: np.ndarray,
        ramp_metering: np.ndarray,
        exogenous_demand: np.ndarray,
        off_ramp_supply: np.ndarray | float,
        dt: float,
    ) -> tuple[ExpresswayState, ExpresswayFlows]:
        """One synchronous density update.

        ramp_transfer_in: (..., 2, R) admitted subregion->on-ramp rates; the
          caller must have capped them at on_ramp_receiving().
        ramp_metering: (..., 2) metering rate per on-ramp in [0, 1].
        exogenous_demand: (..., R) offered rate at the first cell, including
          any released virtual-queue backlog.
        off_ramp_supply: (..., 2) cap on each off-ramp's discharge.

        This is the hot loop of every rollout, so the fundamental-diagram
        formulas are written out inline instead of calling the module ops.
        """
        fdm, fdr = self.fd_main, self.fd_ramp
        km, kon, koff = state.k_main, state.k_on, state.k_off
        km_tot = km.sum(axis=-1)

        # Per-route demand and receiving (capacity drop at merge cells).
        if self._bneck:
            c_eff = np.full(km_tot.shape, fdm.capacity)
            kb = km_tot[..., self.on_cells0]
            cb, kcb = fdm.bottleneck_capacity, fdm.bottleneck_critical_density
            drop = cb * (1.0 - fdm.capacity_drop_lambda * (kb - kcb) / (fdm.jam_density - kcb))
            c_eff[..., self.on_cells0] = np.minimum(cb, drop)
            sigma = np.minimum(fdm.free_flow_speed * km, c_eff[..., None])
            delta = np.minimum(fdm.wave_speed * (fdm.jam_density - km_tot), c_eff)
        else:
            sigma = np.minimum(fdm.free_flow_speed * km, fdm.capacity)
            delta = np.minimum(fdm.wave_speed * (fdm.jam_density - km_tot), fdm.capacity)
        np.maximum(delta, 0.0, out=delta)

        # On-ramps: unmetered flow against the merge cell's receiving, then
        # metered on discharge only.
        sig_on = np.minimum(fdr.free_flow_speed * kon, fdr.capacity)
        q_on = _fifo(sig_on, delta[..., self.on_cells0])
        metered = ramp_metering[..., :, None] * q_on  # (..., 2, R)
        metered_tot = metered.sum(axis=-1)

        # Downstream receiving seen by the mainline: ramp flow has priority
        # into the merge.
        recv = delta
        recv[..., self.on_cells0] = np.maximum(0.0, recv[..., self.on_cells0] - metered_tot)

        # Shared FIFO factor per cell. At a diverge cell, exiting and through
        # vehicles share one queue: the factor honours both the next cell's
        # residual receiving and the off-ramp cell's receiving.
        sig_tot = sigma.sum(axis=-1)
        exit_dem = sigma[..., self.off_cells0, :] * self.exit_mask_region
        exit_tot = exit_dem.sum(axis=-1)  # (..., 2)
        thru_tot = sig_tot
        thru_tot[..., self.off_cells0] -= exit_tot

        recv_next = np.empty_like(recv)
        recv_next[..., :-1] = recv[..., 1:]
        recv_next[..., -1] = np.inf
        pos = thru_tot > 0.0
        phi = np.where(pos, np.minimum(1.0, recv_next / np.where(pos, thru_tot, 1.0)), 1.0)
        koff_tot = koff.sum(axis=-1)
        delta_off = np.minimum(
            np.maximum(0.0, fdr.wave_speed * (fdr.jam_density - koff_tot)), fdr.capacity
        )
        epos = exit_tot > 0.0
        exit_lim = np.where(epos, delta_off / np.where(epos, exit_tot, 1.0), np.inf)
        phi[..., self.off_cells0] = np.minimum(1.0, np.minimum(phi[..., self.off_cells0], exit_lim))

        q_all = phi[..., None] * sigma
        s_div_full = q_all * self.exit_mask_cells
        q_thru = q_all - s_div_full

        s_first = _fifo(exogenous_demand, recv[..., 0])

        sig_off = np.minimum(fdr.free_flow_speed * koff, fdr.capacity)
        q_off = _fifo(sig_off, np.asarray(off_ramp_supply, dtype=float))

        c = dt / self.topology.cell_length
        inflow = np.zeros_like(km)
        inflow[..., 1:, :] = q_thru[..., :-1, :]
        inflow[..., 0, :] += s_first
        inflow[..., self.on_cells0, :] += metered
        k_main_new = km + c * (inflow - (q_thru + s_div_full))
        k_on_new = kon + c * (ramp_transfer_in - metered)
        s_div = s_div_full[..., self.off_cells0, :] * self.exit_mask_region
        k_off_new = koff + c * (s_div - q_off)

        new_state = ExpresswayState(
            k_main=np.maximum(0.0, k_main_new),
            k_on=np.maximum(0.0, k_on_new),
            k_off=np.maximum(0.0, k_off_new),
        )
        vehicles = self.topology.cell_length * (
            km_tot.sum(axis=-1) + kon.sum(axis=(-2, -1)) + koff_tot.sum(axis=-1)
        )
        flows = ExpresswayFlows(
            first_cell=s_first,
            terminal=q_thru[..., -1, :],
            mainline=q_thru,
            ramp_discharge=metered,
            diverge=s_div,
            off_discharge=q_off,
            vehicles_before=vehicles,
        )
        return new_state, flows
