"""Scenario files: loading, validation, unit normalization.

Scenarios are JSON with explicit unit suffixes in field names (km/h, veh/h,
m, s); everything is converted to SI on load. Every validation failure names
the offending field. See data/case_study.json for a complete example.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .control import MpcConfig
from .demand import DemandProfile, PiecewiseLinear, trapezoid
from .expressway import ExpresswayTopology, FundamentalDiagram
from .network import NetworkModel, NetworkState
from .pso import PsoConfig
from .routes import EXPRESSWAYS, REGIONS, RouteChoiceParams
from .subregion import TRIP_LENGTH_KEYS, MfdParams, TripLengthTable

KMH = 1.0 / 3.6  # km/h -> m/s
VEH_H = 1.0 / 3600.0  # veh/h -> veh/s
VEH_KM = 1.0 / 1000.0  # veh/km -> veh/m


class ScenarioError(Exception):
    """Base class for scenario failures."""


class ScenarioParseError(ScenarioError):
    """The file could not be read or is not valid JSON."""


class ScenarioValidationError(ScenarioError):
    """The file parsed but a field is missing, mistyped or inconsistent."""


@dataclass(frozen=True)
class SimConfig:
    sim_step: float  # s
    control_step: float  # s
    horizon_steps: int
    initial_accumulations: tuple[float, float]  # veh, placed on the internal route

    @property
    def steps_per_control(self) -> int:
        return int(round(self.control_step / self.sim_step))


@dataclass
class Scenario:
    name: str
    sim: SimConfig
    mpc: MpcConfig
    fd_main: FundamentalDiagram
    fd_ramp: FundamentalDiagram
    topologies: tuple[ExpresswayTopology, ExpresswayTopology]
    mfd: tuple[MfdParams, MfdParams]
    trip_lengths: tuple[TripLengthTable, TripLengthTable]
    choice: RouteChoiceParams
    demand: DemandProfile
    raw: dict = field(repr=False, default_factory=dict)

    def build_model(self, compliance: float | None = None) -> NetworkModel:
        choice = self.choice
        if compliance is not None:
            choice = RouteChoiceParams(
                logit_sensitivity=choice.logit_sensitivity,
                compliance=compliance,
                time_unit=choice.time_unit,
            )
        return NetworkModel(
            topologies=list(self.topologies),
            fd_main=self.fd_main,
            fd_ramp=self.fd_ramp,
            mfd=list(self.mfd),
            trip_lengths=list(self.trip_lengths),
            choice=choice,
            dt=self.sim.sim_step,
        )

    def initial_state(self, model: NetworkModel) -> NetworkState:
        return model.initial_state(list(self.sim.initial_accumulations))

    def demand_table(self, model: NetworkModel, extra_steps: int = 0) -> np.ndarray:
        return self.demand.sample_table(
            model.od_keys, self.sim.horizon_steps + extra_steps, self.sim.sim_step
        )

    def hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _get(mapping: Any, key: str, path: str, kind: type | tuple = (int, float)) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise ScenarioValidationError(f"missing field '{path}.{key}'")
    value = mapping[key]
    if kind is dict and not isinstance(value, dict):
        raise ScenarioValidationError(f"field '{path}.{key}' must be an object")
    if kind is list and not isinstance(value, list):
        raise ScenarioValidationError(f"field '{path}.{key}' must be an array")
    if kind in ((int, float), float, int) and (
        isinstance(value, bool) or not isinstance(value, (int, float))
    ):
        raise ScenarioValidationError(f"field '{path}.{key}' must be a number")
    return value


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; all quantities normalized to SI."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioValidationError("scenario root must be a JSON object")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    name = raw.get("name", "scenario")

    sim_raw = _get(raw, "sim", "", dict)
    sim_step = float(_get(sim_raw, "sim_step_s", "sim"))
    control_step = float(_get(sim_raw, "control_step_s", "sim"))
    horizon_s = float(_get(sim_raw, "horizon_s", "sim"))
    if sim_step <= 0:
        raise ScenarioValidationError("sim.sim_step_s must be positive")
    if abs(control_step / sim_step - round(control_step / sim_step)) > 1e-9:
        raise ScenarioValidationError("sim.control_step_s must be a multiple of sim.sim_step_s")
    if horizon_s <= 0:
        raise ScenarioValidationError("sim.horizon_s must be positive")
    init_raw = _get(sim_raw, "initial_accumulation_veh", "sim", dict)
    init = tuple(float(_get(init_raw, g, "sim.initial_accumulation_veh")) for g in REGIONS)
    sim = SimConfig(
        sim_step=sim_step,
        control_step=control_step,
        horizon_steps=int(round(horizon_s / sim_step)),
        initial_accumulations=init,  # type: ignore[arg-type]
    )

    exp_raw = _get(raw, "expressways", "", dict)
    cell_count = int(_get(exp_raw, "cell_count", "expressways"))
    cell_length = float(_get(exp_raw, "cell_length_m", "expressways"))
    main_raw = _get(exp_raw, "mainline", "expressways", dict)
    ramp_raw = _get(exp_raw, "ramp", "expressways", dict)

    def fd_from(d: dict, path: str, bneck: dict | None) -> FundamentalDiagram:
        try:
            return FundamentalDiagram(
                free_flow_speed=float(_get(d, "free_flow_speed_km_h", path)) * KMH,
                capacity=float(_get(d, "capacity_veh_h", path)) * VEH_H,
                jam_density=float(_get(d, "jam_density_veh_km", path)) * VEH_KM,
                bottleneck_capacity=(
                    float(_get(bneck, "capacity_veh_h", "expressways.merge_bottleneck")) * VEH_H
                    if bneck is not None
                    else None
                ),
                capacity_drop_lambda=(
                    float(_get(bneck, "capacity_drop_fraction", "expressways.merge_bottleneck"))
                    if bneck is not None
                    else 0.0
                ),
            )
        except ValueError as exc:
            raise ScenarioValidationError(f"invalid fundamental diagram at '{path}': {exc}") from exc

    bneck = exp_raw.get("merge_bottleneck")
    fd_main = fd_from(main_raw, "expressways.mainline", bneck)
    fd_ramp = fd_from(ramp_raw, "expressways.ramp", None)

    # CFL: nothing may cross a whole cell in one step.
    for label, fd in (("mainline", fd_main), ("ramp", fd_ramp)):
        if fd.free_flow_speed * sim.sim_step > cell_length + 1e-9:
            raise ScenarioValidationError(
                f"CFL violated for {label} class: free_flow_speed * sim_step = "
                f"{fd.free_flow_speed * sim.sim_step:.1f} m exceeds cell_length_m = {cell_length:.1f}"
            )

    cells_raw = _get(exp_raw, "ramp_cells", "expressways", dict)
    topologies = []
    for e in EXPRESSWAYS:
        block = _get(cells_raw, e, "expressways.ramp_cells", dict)
        on = _get(block, "on", f"expressways.ramp_cells.{e}", dict)
        off = _get(block, "off", f"expressways.ramp_cells.{e}", dict)
        try:
            topologies.append(
                ExpresswayTopology(
                    name=e,
                    cell_count=cell_count,
                    cell_length=cell_length,
                    on_ramp_cells=tuple(int(_get(on, g, f"...{e}.on")) for g in REGIONS),
                    off_ramp_cells=tuple(int(_get(off, g, f"...{e}.off")) for g in REGIONS),
                )
            )
        except ValueError as exc:
            raise ScenarioValidationError(f"invalid topology for '{e}': {exc}") from exc

    sub_raw = _get(raw, "subregions", "", dict)
    mfds, tlts = [], []
    for g in REGIONS:
        d = _get(sub_raw, g, "subregions", dict)
        path = f"subregions.{g}"
        try:
            mfds.append(
                MfdParams(
                    free_flow_speed=float(_get(d, "free_flow_speed_m_s", path)),
                    shape_xi=float(_get(d, "mfd_shape_xi", path)),
                    shape_gamma=float(_get(d, "mfd_shape_gamma", path)),
                    critical_accumulation=float(_get(d, "critical_accumulation_veh", path)),
                    jam_accumulation=float(_get(d, "jam_accumulation_veh", path)),
                    max_boundary_receiving=float(_get(d, "boundary_capacity_veh_h", path)) * VEH_H,
                )
            )
        except ValueError as exc:
            raise ScenarioValidationError(f"invalid MFD parameters at '{path}': {exc}") from exc
        tl_raw = _get(d, "trip_length_m", path, dict)
        try:
            tlts.append(TripLengthTable({k: float(tl_raw[k]) for k in tl_raw}))
        except (ValueError, TypeError) as exc:
            raise ScenarioValidationError(f"invalid trip lengths at '{path}.trip_length_m': {exc}") from exc
        if sim.initial_accumulations[REGIONS.index(g)] > mfds[-1].jam_accumulation:
            raise ScenarioValidationError(
                f"sim.initial_accumulation_veh.{g} exceeds jam_accumulation_veh"
            )

    rc_raw = _get(raw, "route_choice", "", dict)
    try:
        choice = RouteChoiceParams(
            logit_sensitivity=float(_get(rc_raw, "logit_sensitivity", "route_choice")),
            compliance=float(_get(rc_raw, "compliance", "route_choice")),
            time_unit=float(rc_raw.get("logit_time_unit_s", 60.0)),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"invalid route_choice: {exc}") from exc

    demand = _demand_from(_get(raw, "demand_veh_h", "", dict))

    mpc = _mpc_from(raw.get("mpc", {}))

    return Scenario(
        name=name,
        sim=sim,
        mpc=mpc,
        fd_main=fd_main,
        fd_ramp=fd_ramp,
        topologies=tuple(topologies),  # type: ignore[arg-type]
        mfd=tuple(mfds),  # type: ignore[arg-type]
        trip_lengths=tuple(tlts),  # type: ignore[arg-type]
        choice=choice,
        demand=demand,
        raw=raw,
    )


_VALID_OD = {
    "1-1", "2-2", "1-2", "2-1",
    "1-E12", "2-E21", "1-E21", "2-E12",
    "E12-1", "E21-2", "E12-2", "E21-1",
    "E12-E12", "E21-E21",
}


def _demand_from(raw: dict) -> DemandProfile:
    profiles: dict[str, PiecewiseLinear] = {}
    for od, spec in raw.items():
        if od not in _VALID_OD:
            raise ScenarioValidationError(f"unknown OD class 'demand_veh_h.{od}'")
        path = f"demand_veh_h.{od}"
        if not isinstance(spec, dict):
            raise ScenarioValidationError(f"field '{path}' must be an object")
        try:
            if "trapezoid" in spec:
                t = spec["trapezoid"]
                prof = trapezoid(
                    start=float(_get(t, "start_s", path)),
                    ramp_up_end=float(_get(t, "peak_at_s", path)),
                    hold_end=float(_get(t, "hold_until_s", path)),
                    end=float(_get(t, "end_s", path)),
                    peak=float(_get(t, "peak", path)) * VEH_H,
                )
            elif "piecewise" in spec:
                pw = spec["piecewise"]
                times = tuple(float(x) for x in _get(pw, "times_s", path, list))
                values = tuple(float(x) * VEH_H for x in _get(pw, "values", path, list))
                prof = PiecewiseLinear(times, values)
            elif "constant" in spec:
                prof = PiecewiseLinear((0.0,), (float(spec["constant"]) * VEH_H,))
            else:
                raise ScenarioValidationError(
                    f"field '{path}' needs one of: trapezoid, piecewise, constant"
                )
        except ValueError as exc:
            raise ScenarioValidationError(f"invalid demand profile at '{path}': {exc}") from exc
        profiles[od] = prof
    return DemandProfile(profiles)


def _mpc_from(raw: dict) -> MpcConfig:
    if not isinstance(raw, dict):
        raise ScenarioValidationError("field 'mpc' must be an object")
    pso_raw = raw.get("pso", {})
    try:
        pso = PsoConfig(
            swarm_size=int(pso_raw.get("swarm_size", 40)),
            inertia=float(pso_raw.get("inertia", 0.729)),
            cognitive=float(pso_raw.get("cognitive", 1.494)),
            social=float(pso_raw.get("social", 1.494)),
            iterations=int(pso_raw.get("iterations", 60)),
        )
        return MpcConfig(
            prediction_horizon=int(raw.get("prediction_horizon_steps", 10)),
            control_horizon=int(raw.get("control_horizon_steps", 5)),
            pso=pso,
            jam_penalty=float(raw.get("jam_penalty_veh_s", 1e6)),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"invalid mpc section: {exc}") from exc


def bundled_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "case_study.json"
