"""Experiment orchestration: run policies, serialize results, compare.

Outputs per run (all deterministic byte-for-byte given scenario, seed and
policy):

  timeseries.csv  one row per simulation step, wide format (schema v1,
                  column list documented in the README)
  summary.csv     mean accumulations, mean trip completion flows and TTS
  manifest.json   scenario hash, seed, policy, package version, schema tag
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .control import Trajectory, run_closed_loop
from .routes import EXPRESSWAYS, REGIONS, route_table
from .scenario import Scenario

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CONTROL_NAMES = (
    "theta_1_2",
    "theta_1_E12",
    "theta_E12_2",
    "theta_2_1",
    "theta_2_E21",
    "theta_E21_1",
    "u_12",
    "u_21",
    "eta_E12_1",
    "eta_E12_2",
    "eta_E21_1",
    "eta_E21_2",
)

EPSILON_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def run_policy(scenario: Scenario, policy: str, seed: int, compliance: float | None = None,
               force_baseline: bool = False) -> Trajectory:
    """One closed-loop run of a policy on the scenario."""
    model = scenario.build_model(compliance=compliance)
    state = scenario.initial_state(model)
    extra = scenario.mpc.prediction_horizon * scenario.sim.steps_per_control
    demand = scenario.demand_table(model, extra_steps=extra)
    logger.info("running policy=%s seed=%d horizon=%d steps", policy, seed, scenario.sim.horizon_steps)
    return run_closed_loop(
        model,
        state,
        demand,
        scenario.sim.horizon_steps,
        scenario.sim.steps_per_control,
        policy,
        scenario.mpc,
        seed,
        force_baseline=force_baseline,
    )


def timeseries_columns(traj: Trajectory) -> tuple[list[str], np.ndarray]:
    """Column names and the (K, n_cols) value matrix of the wide time series."""
    cols: list[str] = ["time_s", "vehicles_total"]
    blocks: list[np.ndarray] = [traj.time[:, None], traj.vehicles[:, None]]

    for g, name in enumerate(REGIONS):
        cols += [f"n_sr{name}", f"v_sr{name}_m_s", f"completion_sr{name}_veh_s",
                 f"boundary_out_sr{name}_veh_s"]
        blocks += [
            traj.region_total[:, g : g + 1],
            traj.region_speed[:, g : g + 1],
            traj.internal_completion[:, g : g + 1],
            traj.boundary_flow[:, g : g + 1],
        ]
        for leg in route_table().region_legs[name]:
            cols.append(f"n_sr{name}[{leg.route}]")
        blocks.append(traj.n_legs[g])

    for e, ename in enumerate(EXPRESSWAYS):
        low = ename.lower()
        cols += [
            f"veh_{low}",
            f"queue_{low}",
            f"terminal_flow_{low}_veh_s",
            f"first_cell_flow_{low}_veh_s",
        ]
        blocks += [
            traj.exp_vehicles[:, e : e + 1],
            traj.queue_total[:, e : e + 1],
            traj.terminal_flow[:, e : e + 1],
            traj.first_cell_flow[:, e : e + 1],
        ]
        L = traj.k_main[e].shape[1]
        cols += [f"k_{low}[{l + 1}]_veh_m" for l in range(L)]
        blocks.append(traj.k_main[e])
        cols += [f"v_{low}[{l + 1}]_m_s" for l in range(L)]
        blocks.append(traj.v_main[e])
        for g, gname in enumerate(REGIONS):
            cols += [
                f"k_on_{low}_{gname}_veh_m",
                f"k_off_{low}_{gname}_veh_m",
                f"ramp_transfer_{low}_{gname}_veh_s",
                f"ramp_discharge_{low}_{gname}_veh_s",
                f"offramp_exit_{low}_{gname}_veh_s",
            ]
            blocks += [
                traj.k_on[:, e, g : g + 1],
                traj.k_off[:, e, g : g + 1],
                traj.ramp_transfer[:, e, g : g + 1],
                traj.ramp_discharge[:, e, g : g + 1],
                traj.offramp_exit[:, e, g : g + 1],
            ]

    cols += list(CONTROL_NAMES)
    blocks.append(traj.controls)
    cols += [f"split_{n}" for n in CONTROL_NAMES[:6]]
    blocks.append(traj.splits)
    cols += ["demand_total_veh_s", "completed_total_veh_s"]
    blocks += [traj.demand_total[:, None], traj.completed_total[:, None]]

    return cols, np.concatenate(blocks, axis=1)


def write_timeseries(traj: Trajectory, path: Path) -> None:
    cols, values = timeseries_columns(traj)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in values:
            writer.writerow([_fmt(x) for x in row])


def write_summary(rows: list[dict[str, object]], path: Path) -> None:
    keys = list(rows[0].keys())
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in (row[k] for k in keys)])


def write_manifest(scenario: Scenario, seed: int, policy: str, path: Path, extra: dict | None = None) -> None:
    manifest = {
        "scenario": scenario.name,
        "scenario_hash": scenario.hash(),
        "seed": seed,
        "policy": policy,
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(scenario: Scenario, policy: str, seed: int, out_dir: str | Path) -> dict[str, float]:
    """Run one policy and write timeseries.csv, summary.csv, manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = run_policy(scenario, policy, seed)
    write_timeseries(traj, out / "timeseries.csv")
    summary = {"policy": policy, **traj.summary()}
    write_summary([summary], out / "summary.csv")
    write_manifest(scenario, seed, policy, out / "manifest.json")
    logger.info("policy=%s TTS=%.4g veh*s", policy, traj.tts)
    return traj.summary()


def compare_policies(
    scenario: Scenario,
    seed: int,
    out_dir: str | Path,
    epsilons: tuple[float, ...] = EPSILON_SWEEP,
) -> dict[str, dict[str, float]]:
    """Run ngnc / ncgc / cgc plus a compliance sweep for cgc.

    Writes one sub-directory per run, a comparison.csv with the three-policy
    table (means plus percentage deltas against ngnc) and an
    epsilon_sweep.csv for the cgc compliance sweep.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: dict[str, dict[str, float]] = {}

    for policy in ("ngnc", "ncgc", "cgc"):
        results[policy] = run_experiment(scenario, policy, seed, out / policy)

    base = results["ngnc"]
    rows = []
    for policy in ("ngnc", "ncgc", "cgc"):
        row: dict[str, object] = {"policy": policy, **results[policy]}
        for key in ("mean_accumulation_total", "tts_veh_s", "mean_completion_total"):
            ref = base[key]
            row[f"{key}_delta_pct"] = 100.0 * (results[policy][key] - ref) / ref if ref else 0.0
        rows.append(row)
    write_summary(rows, out / "comparison.csv")

    sweep_rows = []
    for eps in epsilons:
        run_dir = out / f"cgc_eps_{eps:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        traj = run_policy(scenario, "cgc", seed, compliance=eps)
        write_timeseries(traj, run_dir / "timeseries.csv")
        summary = {"policy": "cgc", "epsilon": eps, **traj.summary()}
        write_summary([summary], run_dir / "summary.csv")
        write_manifest(scenario, seed, "cgc", run_dir / "manifest.json", extra={"epsilon": eps})
        results[f"cgc_eps_{eps:g}"] = traj.summary()
        sweep_rows.append(summary)
    write_summary(sweep_rows, out / "epsilon_sweep.csv")

    write_manifest(scenario, seed, "compare", out / "manifest.json")
    return results
