import copy
import json
from pathlib import Path

import numpy as np
import pytest

from mixroadnet.expressway import ExpresswayTopology, FundamentalDiagram
from mixroadnet.network import NetworkModel
from mixroadnet.routes import RouteChoiceParams
from mixroadnet.subregion import MfdParams, TripLengthTable

KMH = 1.0 / 3.6
VPH = 1.0 / 3600.0

TRIP_LENGTHS = {
    "int-int": 1667.0,
    "int-bnd": 1667.0,
    "bnd-int": 1667.0,
    "int-ramp": 1138.0,
    "bnd-ramp": 1138.0,
    "ramp-bnd": 1138.0,
}


def make_fd_main(bottleneck: bool = True) -> FundamentalDiagram:
    return FundamentalDiagram(
        free_flow_speed=80 * KMH,
        capacity=6000 * VPH,
        jam_density=0.375,
        bottleneck_capacity=4800 * VPH if bottleneck else None,
        capacity_drop_lambda=0.3 if bottleneck else 0.0,
    )


def make_fd_ramp() -> FundamentalDiagram:
    return FundamentalDiagram(free_flow_speed=40 * KMH, capacity=3000 * VPH, jam_density=0.275)


def make_topologies(cells: int = 17, ramps=None) -> list[ExpresswayTopology]:
    """Default ramp layout scaled from the 17-cell case; `ramps` overrides
    ((on1, on2), (off1, off2)) for the first direction, mirrored for the second."""
    if ramps is None:
        if cells == 17:
            on, off = (7, 15), (3, 11)
        elif cells >= 4:
            # squeeze the four ramp cells into small instances
            on, off = (2, cells), (1, cells - 1)
        else:
            raise ValueError("need at least 4 cells to place all ramps")
    else:
        on, off = ramps
    t12 = ExpresswayTopology("E12", cells, 500.0, on_ramp_cells=on, off_ramp_cells=off)
    t21 = ExpresswayTopology(
        "E21", cells, 500.0, on_ramp_cells=(on[1], on[0]), off_ramp_cells=(off[1], off[0])
    )
    return [t12, t21]


def make_mfd(cmax_vph: float = 3600.0) -> MfdParams:
    return MfdParams(
        free_flow_speed=9.0,
        shape_xi=1.286,
        shape_gamma=1.0,
        critical_accumulation=4650.0,
        jam_accumulation=13000.0,
        max_boundary_receiving=cmax_vph * VPH,
    )


def make_model(
    cells: int = 17,
    bottleneck: bool = True,
    mu: float = 0.5,
    eps: float = 0.5,
    dt: float = 10.0,
    cmax_vph: float = 3600.0,
) -> NetworkModel:
    return NetworkModel(
        topologies=make_topologies(cells),
        fd_main=make_fd_main(bottleneck),
        fd_ramp=make_fd_ramp(),
        mfd=[make_mfd(cmax_vph)] * 2,
        trip_lengths=[TripLengthTable(TRIP_LENGTHS)] * 2,
        choice=RouteChoiceParams(logit_sensitivity=mu, compliance=eps),
        dt=dt,
    )


@pytest.fixture
def model17() -> NetworkModel:
    return make_model()


@pytest.fixture
def case_study_raw() -> dict:
    from mixroadnet.scenario import bundled_scenario_path

    return json.loads(bundled_scenario_path().read_text())


def small_scenario_dict(horizon_s: float = 600.0) -> dict:
    """A fast-loading scenario for CLI and IO tests."""
    from mixroadnet.scenario import bundled_scenario_path

    raw = json.loads(bundled_scenario_path().read_text())
    raw = copy.deepcopy(raw)
    raw["name"] = "small"
    raw["sim"]["horizon_s"] = horizon_s
    raw["mpc"]["prediction_horizon_steps"] = 2
    raw["mpc"]["control_horizon_steps"] = 1
    raw["mpc"]["pso"]["swarm_size"] = 6
    raw["mpc"]["pso"]["iterations"] = 3
    return raw
