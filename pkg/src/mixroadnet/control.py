"""Receding-horizon control: NGNC / NCGC / CGC policies over the plant.

A control vector holds twelve decision variables, all bounded to [0, 1]:

    [0:6]   guidance splits theta_hat, one per two-route choice set
    [6:8]   perimeter rates u (1->2, 2->1)
    [8:12]  ramp metering eta per (expressway, region): (E12,1), (E12,2),
            (E21,1), (E21,2)

A candidate is one such vector per control-horizon slot; the last slot is
held for the remainder of the prediction horizon (move blocking).

Policies:
  * ngnc - no guidance, no control: u = 1, eta = 1, guidance equal to the
    drivers' own logit split, so the realized split is the pure logit choice.
  * cgc  - one PSO solve over the joint space of all twelve variables.
  * ncgc - hierarchical: first guidance only (flow controls pinned to 1),
    then flow controls only while the prediction assumes drivers follow
    their own logit choice (no guidance awareness).

The uncontrolled baseline candidate is always injected into the initial
swarm, so a solved policy's predicted objective can never exceed the
baseline's on the same forecast.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkModel, NetworkState, StepFlows
from .pso import PsoConfig, pso_minimize
from .subregion import subregion_speed

logger = logging.getLogger(__name__)

N_THETA = 6
N_U = 2
N_ETA = 4
CONTROL_DIM = N_THETA + N_U + N_ETA

THETA_SLICE = slice(0, 6)
U_SLICE = slice(6, 8)
ETA_SLICE = slice(8, 12)

POLICIES = ("ngnc", "ncgc", "cgc")


def decode_controls(candidate: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split (..., 12) candidate rows into theta_hat (..., 6), u (..., 2),
    eta (..., 2, 2) indexed by (expressway, region)."""
    candidate = np.asarray(candidate, dtype=float)
    theta = candidate[..., THETA_SLICE]
    u = candidate[..., U_SLICE]
    eta = candidate[..., ETA_SLICE].reshape(candidate.shape[:-1] + (2, 2))
    return theta, u, eta


@dataclass(frozen=True)
class MpcConfig:
    prediction_horizon: int = 10  # control steps
    control_horizon: int = 5  # control steps
    pso: PsoConfig = field(default_factory=PsoConfig)
    jam_penalty: float = 1e6  # veh*s per vehicle-step above the accumulation bound

    def __post_init__(self) -> None:
        if not 1 <= self.control_horizon <= self.prediction_horizon:
            raise ValueError("need 1 <= control_horizon <= prediction_horizon")


def ngnc_candidate(model: NetworkModel, state: NetworkState, n_slots: int) -> np.ndarray:
    """The uncontrolled baseline: u = 1, eta = 1, guidance = current logit split."""
    cand = np.ones((n_slots, CONTROL_DIM))
    cand[:, THETA_SLICE] = model.logit_splits(state)
    return cand


def evaluate_objective(
    model: NetworkModel,
    state: NetworkState,
    candidates: np.ndarray,
    demand_table: np.ndarray,
    start_step: int,
    cfg: MpcConfig,
    steps_per_control: int,
    compliance: float | None = None,
) -> np.ndarray:
    """Predicted cost (veh*s) of candidate control sequences.

    candidates: (P, n_slots, 12) or (n_slots, 12). Rolls the plant forward
    prediction_horizon control steps with move blocking and returns total
    time spent plus the soft accumulation-bound penalty.
    """
    candidates = np.asarray(candidates, dtype=float)
    squeeze = candidates.ndim == 2
    if squeeze:
        candidates = candidates[None]
    theta, u, eta = decode_controls(candidates)
    batch = state.tile(candidates.shape[0])
    cost = model.predict(
        batch,
        theta,
        u,
        eta,
        demand_table,
        start_step,
        cfg.prediction_horizon,
        steps_per_control,
        jam_penalty=cfg.jam_penalty,
        compliance=compliance,
    )
    return cost[0] if squeeze else cost


def solve_cgc(
    model: NetworkModel,
    state: NetworkState,
    demand_table: np.ndarray,
    start_step: int,
    cfg: MpcConfig,
    steps_per_control: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint optimization of guidance, perimeter and metering variables."""
    n_slots = cfg.control_horizon
    dim = n_slots * CONTROL_DIM

    def objective(x: np.ndarray) -> np.ndarray:
        return evaluate_objective(
            model,
            state,
            x.reshape(-1, n_slots, CONTROL_DIM),
            demand_table,
            start_step,
            cfg,
            steps_per_control,
        )

    baseline = ngnc_candidate(model, state, n_slots).ravel()
    result = pso_minimize(
        objective, np.zeros(dim), np.ones(dim), cfg.pso, rng, init=[baseline]
    )
    return result.x.reshape(n_slots, CONTROL_DIM)


def solve_ncgc(
    model: NetworkModel,
    state: NetworkState,
    demand_table: np.ndarray,
    start_step: int,
    cfg: MpcConfig,
    steps_per_control: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Hierarchical solve: guidance stage, then flow-control stage.

    Stage 1 optimizes theta_hat with u = eta = 1 and compliance as
    configured. Stage 2 optimizes u and eta while the prediction pins the
    realized split to the drivers' logit choice (guidance unseen), then both
    halves are concatenated into the applied control.
    """
    n_slots = cfg.control_horizon
    dim_theta = n_slots * N_THETA
    baseline = ngnc_candidate(model, state, n_slots)

    def stage1_objective(x: np.ndarray) -> np.ndarray:
        cand = np.ones((x.shape[0], n_slots, CONTROL_DIM))
        cand[:, :, THETA_SLICE] = x.reshape(-1, n_slots, N_THETA)
        return evaluate_objective(
            model, state, cand, demand_table, start_step, cfg, steps_per_control
        )

    s1 = pso_minimize(
        stage1_objective,
        np.zeros(dim_theta),
        np.ones(dim_theta),
        cfg.pso,
        rng,
        init=[baseline[:, THETA_SLICE].ravel()],
    )
    theta_opt = s1.x.reshape(n_slots, N_THETA)

    dim_flow = n_slots * (N_U + N_ETA)

    def stage2_objective(x: np.ndarray) -> np.ndarray:
        cand = np.ones((x.shape[0], n_slots, CONTROL_DIM))
        cand[:, :, THETA_SLICE] = baseline[:, THETA_SLICE]
        cand[:, :, U_SLICE.start :] = x.reshape(-1, n_slots, N_U + N_ETA)
        return evaluate_objective(
            model,
            state,
            cand,
            demand_table,
            start_step,
            cfg,
            steps_per_control,
            compliance=0.0,  # realized split pinned to the pure logit choice
        )

    s2 = pso_minimize(
        stage2_objective,
        np.zeros(dim_flow),
        np.ones(dim_flow),
        cfg.pso,
        rng,
        init=[np.ones(dim_flow)],
    )
    flow_opt = s2.x.reshape(n_slots, N_U + N_ETA)

    out = np.ones((n_slots, CONTROL_DIM))
    out[:, THETA_SLICE] = theta_opt
    out[:, U_SLICE.start :] = flow_opt
    return out


@dataclass
class Trajectory:
    """Plant records over one closed-loop run, one row per simulation step."""

    dt: float
    time: np.ndarray  # (K,)
    vehicles: np.ndarray  # (K,) whole network incl. queues
    region_total: np.ndarray  # (K, 2)
    region_speed: np.ndarray  # (K, 2) m/s
    n_legs: list[np.ndarray]  # per region (K, n_legs)
    exp_vehicles: np.ndarray  # (K, 2)
    queue_total: np.ndarray  # (K, 2)
    k_main: list[np.ndarray]  # per expressway (K, L) total density veh/m
    v_main: list[np.ndarray]  # per expressway (K, L) m/s
    k_on: np.ndarray  # (K, 2, 2) (expressway, region)
    k_off: np.ndarray  # (K, 2, 2)
    internal_completion: np.ndarray  # (K, 2) veh/s per region
    offramp_exit: np.ndarray  # (K, 2, 2) trip completions at (expressway, region)
    terminal_flow: np.ndarray  # (K, 2) veh/s per expressway
    boundary_flow: np.ndarray  # (K, 2) admitted (1->2, 2->1)
    ramp_transfer: np.ndarray  # (K, 2, 2) subregion -> on-ramp
    ramp_discharge: np.ndarray  # (K, 2, 2) metered on-ramp -> mainline
    first_cell_flow: np.ndarray  # (K, 2)
    demand_total: np.ndarray  # (K,)
    completed_total: np.ndarray  # (K,)
    controls: np.ndarray  # (K, 12) applied control at each step
    splits: np.ndarray  # (K, 6) realized primary-route shares

    @property
    def tts(self) -> float:
        return float(self.dt * self.vehicles.sum())

    def completion_flow_total(self) -> np.ndarray:
        return (
            self.internal_completion.sum(axis=1)
            + self.offramp_exit.sum(axis=(1, 2))
            + self.terminal_flow.sum(axis=1)
        )

    def conservation_error(self) -> float:
        """Initial + generated - completed - stored at the last record, veh."""
        net = self.dt * (self.demand_total[:-1] - self.completed_total[:-1]).sum()
        return float(self.vehicles[0] + net - self.vehicles[-1])

    def summary(self) -> dict[str, float]:
        m = {
            "mean_accumulation_sr1": float(self.region_total[:, 0].mean()),
            "mean_accumulation_sr2": float(self.region_total[:, 1].mean()),
            "mean_accumulation_e12": float(self.exp_vehicles[:, 0].mean()),
            "mean_accumulation_e21": float(self.exp_vehicles[:, 1].mean()),
            "mean_queue_e12": float(self.queue_total[:, 0].mean()),
            "mean_queue_e21": float(self.queue_total[:, 1].mean()),
            "mean_completion_sr1": float(self.internal_completion[:, 0].mean()),
            "mean_completion_sr2": float(self.internal_completion[:, 1].mean()),
            "mean_completion_e12": float(self.terminal_flow[:, 0].mean()),
            "mean_completion_e21": float(self.terminal_flow[:, 1].mean()),
            "mean_completion_offramp": float(self.offramp_exit.sum(axis=(1, 2)).mean()),
            "tts_veh_s": self.tts,
        }
        m["mean_accumulation_total"] = (
            m["mean_accumulation_sr1"]
            + m["mean_accumulation_sr2"]
            + m["mean_accumulation_e12"]
            + m["mean_accumulation_e21"]
            + m["mean_queue_e12"]
            + m["mean_queue_e21"]
        )
        m["mean_completion_total"] = (
            m["mean_completion_sr1"]
            + m["mean_completion_sr2"]
            + m["mean_completion_e12"]
            + m["mean_completion_e21"]
            + m["mean_completion_offramp"]
        )
        return m


def run_closed_loop(
    model: NetworkModel,
    initial_state: NetworkState,
    demand_table: np.ndarray,
    n_steps: int,
    steps_per_control: int,
    policy: str,
    mpc: MpcConfig,
    seed: int,
    force_baseline: bool = False,
    validate_every: int = 1,
) -> Trajectory:
    """Roll the plant over the full horizon, re-solving at each control step.

    The per-solve RNG is derived from (seed, control step, stage) so runs are
    bit-reproducible. A solver failure falls back to the previous control.
    force_baseline makes a solved policy apply the uncontrolled candidate,
    which must reproduce the ngnc trajectory exactly.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy '{policy}'")
    if n_steps <= 0 or steps_per_control <= 0:
        raise ValueError("n_steps and steps_per_control must be positive")

    state = initial_state.copy()
    rec = _Recorder(model, n_steps)
    previous: np.ndarray | None = None

    k = 0
    kc = 0
    while k < n_steps:
        if policy == "ngnc" or force_baseline:
            candidate = ngnc_candidate(model, state, 1)
        else:
            rng = np.random.default_rng((seed, kc, 0))
            try:
                if policy == "cgc":
                    candidate = solve_cgc(model, state, demand_table, k, mpc, steps_per_control, rng)
                else:
                    candidate = solve_ncgc(model, state, demand_table, k, mpc, steps_per_control, rng)
            except Exception:
                logger.exception("solver failed at control step %d; reusing previous control", kc)
                candidate = previous if previous is not None else ngnc_candidate(model, state, 1)
        previous = candidate

        applied = candidate[0]
        theta_hat, u, eta = decode_controls(applied)
        realized = model.realized_splits(state, theta_hat)
        for _ in range(steps_per_control):
            if k >= n_steps:
                break
            od = demand_table[min(k, len(demand_table) - 1)]
            new_state, flows = model.advance(state, u, eta, realized, od)
            if validate_every and k % validate_every == 0:
                model.validate_state(new_state)
            rec.record(k, state, flows, applied, realized)
            state = new_state
            k += 1
        kc += 1
    return rec.finish()


class _Recorder:
    def __init__(self, model: NetworkModel, n_steps: int) -> None:
        self.model = model
        K = n_steps
        L = [t.cell_count for t in model.topologies]
        self.t = Trajectory(
            dt=model.dt,
            time=np.zeros(K),
            vehicles=np.zeros(K),
            region_total=np.zeros((K, 2)),
            region_speed=np.zeros((K, 2)),
            n_legs=[np.zeros((K, len(model.table.region_legs[g]))) for g in ("1", "2")],
            exp_vehicles=np.zeros((K, 2)),
            queue_total=np.zeros((K, 2)),
            k_main=[np.zeros((K, L[e])) for e in (0, 1)],
            v_main=[np.zeros((K, L[e])) for e in (0, 1)],
            k_on=np.zeros((K, 2, 2)),
            k_off=np.zeros((K, 2, 2)),
            internal_completion=np.zeros((K, 2)),
            offramp_exit=np.zeros((K, 2, 2)),
            terminal_flow=np.zeros((K, 2)),
            boundary_flow=np.zeros((K, 2)),
            ramp_transfer=np.zeros((K, 2, 2)),
            ramp_discharge=np.zeros((K, 2, 2)),
            first_cell_flow=np.zeros((K, 2)),
            demand_total=np.zeros(K),
            completed_total=np.zeros(K),
            controls=np.zeros((K, CONTROL_DIM)),
            splits=np.zeros((K, 6)),
        )

    def record(
        self,
        k: int,
        state: NetworkState,
        flows: StepFlows,
        applied: np.ndarray,
        realized: np.ndarray,
    ) -> None:
        m, t = self.model, self.t
        t.time[k] = k * m.dt
        t.vehicles[k] = flows.vehicles_before
        for g in (0, 1):
            t.region_total[k, g] = flows.region_total_before[g]
            t.n_legs[g][k] = state.n[g]
            t.internal_completion[k, g] = flows.internal_completion[g].sum()
            t.boundary_flow[k, g] = flows.boundary_admitted[g].sum()
        t.region_speed[k] = [
            subregion_speed(flows.region_total_before[g], m.mfd[g]) for g in (0, 1)
        ]
        for e in (0, 1):
            em = m.exp_models[e]
            t.exp_vehicles[k, e] = em.vehicles(state.exp[e])
            t.queue_total[k, e] = state.queue[e].sum()
            v_main, _, _ = em.speeds(state.exp[e])
            t.k_main[e][k] = state.exp[e].k_main.sum(axis=-1)
            t.v_main[e][k] = v_main
            t.k_on[k, e] = state.exp[e].k_on.sum(axis=-1)
            t.k_off[k, e] = state.exp[e].k_off.sum(axis=-1)
            t.offramp_exit[k, e] = flows.offramp_terminating[e]
            t.terminal_flow[k, e] = flows.terminal[e]
            t.first_cell_flow[k, e] = flows.first_cell[e]
            t.ramp_discharge[k, e] = flows.ramp_discharge[e]
            for g in (0, 1):
                src = m.table.ramp_src[(("1", "2")[g], ("E12", "E21")[e])]
                t.ramp_transfer[k, e, g] = flows.ramp_admitted[g][..., src].sum()
        t.demand_total[k] = flows.demand_total
        t.completed_total[k] = flows.completed_total
        t.controls[k] = applied
        t.splits[k] = realized

    def finish(self) -> Trajectory:
        return self.t
