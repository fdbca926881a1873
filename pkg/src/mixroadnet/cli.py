"""Command line interface.

    mixroadnet validate <scenario.json>
    mixroadnet simulate <scenario.json> --policy {ngnc,ncgc,cgc} --seed N --out DIR
    mixroadnet compare  <scenario.json> --seed N --out DIR

Log verbosity comes from the MIXROADNET_LOG environment variable
(debug, info, warning; default warning).

Exit codes: 0 success, 2 parse error, 3 validation error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .experiments import compare_policies, run_experiment
from .scenario import ScenarioParseError, ScenarioValidationError, load_scenario

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _setup_logging() -> None:
    level = os.environ.get("MIXROADNET_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixroadnet",
        description="Macroscopic mixed road network simulator and cooperative controller",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")

    p_sim = sub.add_parser("simulate", help="run one policy")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--policy", choices=("ngnc", "ncgc", "cgc"), required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="run ngnc/ncgc/cgc and a compliance sweep")
    p_cmp.add_argument("scenario")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print(f"scenario '{scenario.name}' is valid (hash {scenario.hash()})")
        return EXIT_OK

    try:
        if args.command == "simulate":
            summary = run_experiment(scenario, args.policy, args.seed, args.out)
            print(
                f"{args.policy}: TTS = {summary['tts_veh_s']:.6g} veh*s, "
                f"mean accumulation = {summary['mean_accumulation_total']:.6g} veh"
            )
        else:
            results = compare_policies(scenario, args.seed, args.out)
            for policy in ("ngnc", "ncgc", "cgc"):
                print(
                    f"{policy}: TTS = {results[policy]['tts_veh_s']:.6g} veh*s, "
                    f"mean accumulation = {results[policy]['mean_accumulation_total']:.6g} veh"
                )
    except Exception as exc:  # noqa: BLE001 - reported with a clean exit code
        logging.getLogger(__name__).exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
