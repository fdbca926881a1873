"""Composition of two subregions and two directed expressways into one plant.

One synchronous step works entirely from the pre-step snapshot:

  1. region speeds, boundary supplies, on-ramp receivings
  2. OD demand is split onto routes with the splits fixed at the last
     control boundary
  3. subregion gate flows (internal completion, perimeter-limited boundary
     transfer, ramp transfer limited by on-ramp receiving)
  4. expressway internal flows (merge with capacity drop, FIFO diverge,
     metered ramp discharge, first-cell admission fed by a virtual queue)
  5. arrivals are scattered to their receiving systems and all densities,
     accumulations and queues are updated at once

Unserved exogenous expressway demand waits in a per-route virtual queue and
re-offers next step; queued vehicles count toward total time spent. All state
arrays accept leading batch axes so many candidate rollouts advance together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expressway import (
    ExpresswayModel,
    ExpresswayState,
    ExpresswayTopology,
    FundamentalDiagram,
    InvariantViolation,
)
from .routes import (
    EXPRESSWAYS,
    REGIONS,
    RouteChoiceParams,
    RouteTable,
    assign_demand,
    blend_compliance,
    build_time_programs,
    evaluate_time_programs,
    logit_split,
    route_table,
)
from .subregion import (
    MfdParams,
    TripLengthTable,
    boundary_receiving,
    limited_boundary_transfer,
    limited_ramp_transfer,
    subregion_speed,
)


@dataclass
class NetworkState:
    """Full plant state: per-leg accumulations, expressway densities, queues."""

    n: list[np.ndarray]  # per region, (..., n_legs)
    exp: list[ExpresswayState]  # per expressway
    queue: list[np.ndarray]  # per expressway, (..., R_e) vehicles
    step: int = 0

    def copy(self) -> "NetworkState":
        return NetworkState(
            n=[a.copy() for a in self.n],
            exp=[e.copy() for e in self.exp],
            queue=[q.copy() for q in self.queue],
            step=self.step,
        )

    def tile(self, batch: int) -> "NetworkState":
        """Replicate an unbatched state along a new leading axis."""

        def rep(a: np.ndarray) -> np.ndarray:
            return np.repeat(a[None, ...], batch, axis=0)

        return NetworkState(
            n=[rep(a) for a in self.n],
            exp=[ExpresswayState(rep(e.k_main), rep(e.k_on), rep(e.k_off)) for e in self.exp],
            queue=[rep(q) for q in self.queue],
            step=self.step,
        )

    def take(self, index: int) -> "NetworkState":
        """Extract one batch member as an unbatched state."""
        return NetworkState(
            n=[a[index] for a in self.n],
            exp=[
                ExpresswayState(e.k_main[index], e.k_on[index], e.k_off[index])
                for e in self.exp
            ],
            queue=[q[index] for q in self.queue],
            step=self.step,
        )


@dataclass
class StepFlows:
    """Realized rates (veh/s) of one step, for records and conservation."""

    demand_total: np.ndarray
    internal_completion: list[np.ndarray]  # per region, (..., n_legs)
    boundary_admitted: list[np.ndarray]
    ramp_admitted: list[np.ndarray]
    offramp_terminating: list[np.ndarray]  # per expressway, (..., 2) by region
    offramp_continuing: list[np.ndarray]  # per expressway, (..., 2)
    terminal: list[np.ndarray]  # per expressway, (...,)
    first_cell: list[np.ndarray]  # per expressway, (...,)
    ramp_discharge: list[np.ndarray]  # per expressway, (..., 2) metered into mainline
    completed_total: np.ndarray
    vehicles_before: np.ndarray  # (...,) vehicles in the whole network at step start
    region_total_before: list[np.ndarray]  # per region, (...,)


class NetworkModel:
    """Binds scenario parameters to the route structure and advances the plant."""

    def __init__(
        self,
        topologies: Sequence[ExpresswayTopology],
        fd_main: FundamentalDiagram,
        fd_ramp: FundamentalDiagram,
        mfd: Sequence[MfdParams],
        trip_lengths: Sequence[TripLengthTable],
        choice: RouteChoiceParams,
        dt: float,
    ) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.table: RouteTable = route_table()
        self.dt = dt
        self.fd_main = fd_main
        self.fd_ramp = fd_ramp
        self.mfd = list(mfd)
        self.trip_lengths = list(trip_lengths)
        self.choice = choice
        self.topologies = list(topologies)
        self.exp_models = [
            ExpresswayModel(topologies[e], fd_main, fd_ramp, self.table.expressway_routing[name])
            for e, name in enumerate(EXPRESSWAYS)
        ]

        t = self.table
        self.leg_routes = [t.region_leg_routes[g] for g in REGIONS]
        self.leg_atl = [
            np.array([self.trip_lengths[gi][leg.path_class] for leg in t.region_legs[g]])
            for gi, g in enumerate(REGIONS)
        ]
        self.internal_mask = [
            np.array([leg.exit_family == 0 for leg in t.region_legs[g]], dtype=float)
            for g in REGIONS
        ]
        self.boundary_mask = [
            np.array([leg.exit_family == 1 for leg in t.region_legs[g]], dtype=float)
            for g in REGIONS
        ]
        self.origin_mask = [
            np.array([leg.entry == "int" for leg in t.region_legs[g]], dtype=float)
            for g in REGIONS
        ]

        on_cells = {name: topologies[e].on_ramp_cells for e, name in enumerate(EXPRESSWAYS)}
        off_cells = {name: topologies[e].off_ramp_cells for e, name in enumerate(EXPRESSWAYS)}
        counts = {name: topologies[e].cell_count for e, name in enumerate(EXPRESSWAYS)}
        self.time_programs = build_time_programs(t, on_cells, off_cells, counts)

        self.od_keys = tuple("-".join(od) for od in t.od_classes)

    # -- state construction ------------------------------------------------

    def zero_state(self, batch_shape: tuple[int, ...] = ()) -> NetworkState:
        t = self.table
        return NetworkState(
            n=[np.zeros(batch_shape + (len(t.region_legs[g]),)) for g in REGIONS],
            exp=[m.zero_state(batch_shape) for m in self.exp_models],
            queue=[np.zeros(batch_shape + (m.n_routes,)) for m in self.exp_models],
            step=0,
        )

    def initial_state(self, accumulations: Sequence[float] | Sequence[dict]) -> NetworkState:
        """Initial accumulations per region: either a total (placed on the
        internal route) or a mapping route id -> veh."""
        state = self.zero_state()
        for gi, g in enumerate(REGIONS):
            spec = accumulations[gi]
            legs = self.table.region_legs[g]
            if isinstance(spec, dict):
                for rid, veh in spec.items():
                    state.n[gi][self.table.leg_index[g][rid]] = float(veh)
            else:
                internal_route = f"{g}-{g}"
                state.n[gi][self.table.leg_index[g][internal_route]] = float(spec)
            if np.any(state.n[gi] < 0) or len(legs) != state.n[gi].shape[-1]:
                raise ValueError(f"invalid initial accumulation for region {g}")
        return state

    # -- bookkeeping --------------------------------------------------------

    def vehicles_total(self, state: NetworkState) -> np.ndarray:
        total = state.n[0].sum(axis=-1) + state.n[1].sum(axis=-1)
        for e, m in enumerate(self.exp_models):
            total = total + m.vehicles(state.exp[e]) + state.queue[e].sum(axis=-1)
        return total

    def accumulations(self, state: NetworkState) -> dict[str, np.ndarray]:
        out = {f"sr{g}": state.n[gi].sum(axis=-1) for gi, g in enumerate(REGIONS)}
        for e, name in enumerate(EXPRESSWAYS):
            out[name.lower()] = self.exp_models[e].vehicles(state.exp[e])
            out[f"queue_{name.lower()}"] = state.queue[e].sum(axis=-1)
        return out

    def validate_state(self, state: NetworkState) -> None:
        for gi, g in enumerate(REGIONS):
            if np.any(state.n[gi] < -1e-9):
                raise InvariantViolation(f"negative accumulation in region {g}")
        for e, name in enumerate(EXPRESSWAYS):
            state.exp[e].validate(self.fd_main, self.fd_ramp, label=name)
            if np.any(state.queue[e] < -1e-9):
                raise InvariantViolation(f"negative virtual queue on {name}")

    # -- route choice --------------------------------------------------------

    def travel_times(self, state: NetworkState) -> np.ndarray:
        """Instantaneous travel time (s) per route from the current snapshot."""
        region_speed = {
            g: subregion_speed(state.n[gi].sum(axis=-1), self.mfd[gi])
            for gi, g in enumerate(REGIONS)
        }
        trip_length = {g: self.trip_lengths[gi] for gi, g in enumerate(REGIONS)}
        mainline_speed, on_speed, off_speed, cell_length = {}, {}, {}, {}
        for e, name in enumerate(EXPRESSWAYS):
            v_main, v_on, v_off = self.exp_models[e].speeds(state.exp[e])
            mainline_speed[name] = v_main
            on_speed[name] = v_on
            off_speed[name] = v_off
            cell_length[name] = self.topologies[e].cell_length
        return evaluate_time_programs(
            self.time_programs,
            self.table,
            region_speed,
            trip_length,
            mainline_speed,
            on_speed,
            off_speed,
            cell_length,
        )

    def logit_splits(self, state: NetworkState) -> np.ndarray:
        """Driver splits (share of the primary route) per choice set, (..., 6)."""
        times = self.travel_times(state)
        t_primary = times[..., self.table.cs_primary_idx]
        t_alt = times[..., self.table.cs_alternate_idx]
        return logit_split(t_primary, t_alt, self.choice)

    def realized_splits(
        self,
        state: NetworkState,
        theta_hat: np.ndarray,
        compliance: float | None = None,
    ) -> np.ndarray:
        eps = self.choice.compliance if compliance is None else compliance
        return blend_compliance(self.logit_splits(state), theta_hat, eps)

    # -- dynamics ----------------------------------------------------------------

    def advance(
        self,
        state: NetworkState,
        u: np.ndarray,
        eta: np.ndarray,
        splits: np.ndarray,
        od_rate: np.ndarray,
    ) -> tuple[NetworkState, StepFlows]:
        """One synchronous step. u: (..., 2) perimeter rates (1->2, 2->1);
        eta: (..., 2, 2) metering per (expressway, region); splits: (..., 6)
        realized primary-route shares; od_rate: (..., n_od) veh/s."""
        dt = self.dt
        q_routes = assign_demand(od_rate, splits, self.table)

        n_tot = [state.n[g].sum(axis=-1) for g in (0, 1)]
        v_region = [subregion_speed(n_tot[g], self.mfd[g]) for g in (0, 1)]
        b_supply = [boundary_receiving(n_tot[g], self.mfd[g]) for g in (0, 1)]
        onramp_recv = [m.on_ramp_receiving(state.exp[e]) for e, m in enumerate(self.exp_models)]

        internal_done, boundary_adm, ramp_adm, outflow = [], [], [], []
        for g in (0, 1):
            n = state.n[g]
            rate = n * v_region[g][..., None] / self.leg_atl[g]
            rate = np.minimum(rate, n / dt)  # availability guard
            m_int = rate * self.internal_mask[g]
            wanted_b = rate * self.boundary_mask[g]
            adm_b = limited_boundary_transfer(wanted_b, u[..., g], n_tot[1 - g], self.mfd[1 - g])
            adm_r = np.zeros_like(rate)
            for e, name in enumerate(EXPRESSWAYS):
                src = self.table.ramp_src[(REGIONS[g], name)]
                if src.size:
                    adm_r[..., src] = limited_ramp_transfer(rate[..., src], onramp_recv[e][..., g])
            internal_done.append(m_int)
            boundary_adm.append(adm_b)
            ramp_adm.append(adm_r)
            outflow.append(m_int + adm_b + adm_r)

        new_exp, exp_flows, new_queues = [], [], []
        first_cell_tot, terminal_tot, off_term, off_cont, ramp_disch = [], [], [], [], []
        for e, name in enumerate(EXPRESSWAYS):
            em = self.exp_models[e]
            transfer = np.zeros(state.exp[e].k_on.shape)
            for g in (0, 1):
                src = self.table.ramp_src[(REGIONS[g], name)]
                dst = self.table.ramp_dst[(REGIONS[g], name)]
                if src.size:
                    transfer[..., g, dst] = ramp_adm[g][..., src]
            q_first = (
                q_routes[..., self.table.expressway_global_idx[name]] * em.enters_first
                + state.queue[e] / dt
            )
            off_supply = np.stack([b_supply[0], b_supply[1]], axis=-1)
            nxt, fl = em.step(state.exp[e], transfer, eta[..., e, :], q_first, off_supply, dt)
            new_exp.append(nxt)
            exp_flows.append(fl)
            new_queues.append(np.maximum(0.0, dt * (q_first - fl.first_cell)))
            first_cell_tot.append(fl.first_cell.sum(axis=-1))
            terminal_tot.append(fl.terminal.sum(axis=-1))
            term = np.stack(
                [
                    (fl.off_discharge[..., g, :] * self.table.offramp_term_mask[(name, REGIONS[g])]).sum(axis=-1)
                    for g in (0, 1)
                ],
                axis=-1,
            )
            cont = fl.off_discharge.sum(axis=-1) - term
            off_term.append(term)
            off_cont.append(cont)
            ramp_disch.append(fl.ramp_discharge.sum(axis=-1))

        new_n = []
        for g in (0, 1):
            injected = q_routes[..., self.leg_routes[g]] * self.origin_mask[g]
            inflow = np.zeros(np.broadcast_shapes(injected.shape, state.n[g].shape))
            inflow += injected
            other = 1 - g
            src = self.table.boundary_src[REGIONS[other]]
            dst = self.table.boundary_dst[REGIONS[other]]
            inflow[..., dst] += boundary_adm[other][..., src]
            for e, name in enumerate(EXPRESSWAYS):
                csrc = self.table.offramp_cont_src[(name, REGIONS[g])]
                cdst = self.table.offramp_cont_dst[(name, REGIONS[g])]
                if csrc.size:
                    inflow[..., cdst] += exp_flows[e].off_discharge[..., g, csrc]
            new_n.append(np.maximum(0.0, state.n[g] + dt * (inflow - outflow[g])))

        completed = (
            internal_done[0].sum(axis=-1)
            + internal_done[1].sum(axis=-1)
            + sum(t.sum(axis=-1) for t in off_term)
            + sum(terminal_tot)
        )
        vehicles = (
            n_tot[0]
            + n_tot[1]
            + sum(fl.vehicles_before for fl in exp_flows)
            + sum(q.sum(axis=-1) for q in state.queue)
        )
        flows = StepFlows(
            demand_total=od_rate.sum(axis=-1),
            internal_completion=internal_done,
            boundary_admitted=boundary_adm,
            ramp_admitted=ramp_adm,
            offramp_terminating=off_term,
            offramp_continuing=off_cont,
            terminal=terminal_tot,
            first_cell=first_cell_tot,
            ramp_discharge=ramp_disch,
            completed_total=completed,
            vehicles_before=vehicles,
            region_total_before=n_tot,
        )
        new_state = NetworkState(n=new_n, exp=new_exp, queue=new_queues, step=state.step + 1)
        return new_state, flows

    def predict(
        self,
        state: NetworkState,
        theta_hat_slots: np.ndarray,
        u_slots: np.ndarray,
        eta_slots: np.ndarray,
        demand_table: np.ndarray,
        start_step: int,
        n_control_steps: int,
        steps_per_control: int,
        jam_penalty: float = 1e6,
        compliance: float | None = None,
    ) -> np.ndarray:
        """Objective of a rollout: total time spent plus accumulation-bound
        penalty, veh*s. Slot arrays have shape (..., n_slots, dim); the last
        slot is held once the control horizon is exhausted (move blocking).
        """
        n_slots = theta_hat_slots.shape[-2]
        tts = 0.0
        k = start_step
        current = state
        for slot in range(n_control_steps):
            s = min(slot, n_slots - 1)
            splits = self.realized_splits(current, theta_hat_slots[..., s, :], compliance)
            u = u_slots[..., s, :]
            eta = eta_slots[..., s, :, :]
            for _ in range(steps_per_control):
                od = demand_table[min(k, len(demand_table) - 1)]
                current, fl = self.advance(current, u, eta, splits, od)
                tts = tts + self.dt * fl.vehicles_before
                for g in (0, 1):
                    excess = np.maximum(0.0, fl.region_total_before[g] - self.mfd[g].jam_accumulation)
                    tts = tts + jam_penalty * excess
                k += 1
        return np.asarray(tts)


def total_time_spent(vehicle_counts: Sequence[float] | np.ndarray, dt: float) -> float:
    """Time integral of vehicles present: sum over steps of dt * vehicles."""
    return float(dt * np.sum(np.asarray(vehicle_counts, dtype=float)))
