"""Route set, travel-time estimation, logit choice and demand assignment.

The network has two subregions ("1", "2") joined by one directed expressway
per sense ("E12", "E21"). Every trip follows one of twenty routes; an OD pair
has at most two alternatives, and six ODs form the guidance choice sets:

    (1,2):   1-2      | 1-E12-2        (2,1):   2-1      | 2-E21-1
    (1,E12): 1-E12    | 1-2-E12        (2,E21): 2-E21    | 2-1-E21
    (E12,2): E12-2    | E12-1-2        (E21,1): E21-1    | E21-2-1

Route ids spell the traversed systems in order. A route visits each system
at most once, so the pair (region, route) uniquely identifies what a vehicle
is doing there: which path class applies and through which gate it leaves.
Trips whose final subregion is reached through an off-ramp end right at the
ramp exit and never accumulate in that region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressway import ExpresswayRouting

REGIONS = ("1", "2")
EXPRESSWAYS = ("E12", "E21")

# Exit families of a leg inside a region.
EXIT_INTERNAL = 0
EXIT_BOUNDARY = 1
EXIT_RAMP = 2


@dataclass(frozen=True)
class Route:
    """One trip route: OD class plus the ordered systems it traverses."""

    rid: str
    od: tuple[str, str]
    nodes: tuple[str, ...]

    def __post_init__(self) -> None:
        expressway_visits = sum(1 for n in self.nodes if n in EXPRESSWAYS)
        if expressway_visits > 1:
            raise ValueError(f"{self.rid}: an expressway may be used at most once")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"{self.rid}: a system may not be revisited")


@dataclass(frozen=True)
class RouteChoiceParams:
    """Logit route-choice and guidance-compliance parameters.

    logit_sensitivity is expressed per time_unit of travel time (default one
    minute), so typical values around 0.05-2 span indifferent to near-greedy
    drivers at realistic trip times.
    """

    logit_sensitivity: float
    compliance: float
    time_unit: float = 60.0  # s per logit time unit

    def __post_init__(self) -> None:
        if self.logit_sensitivity < 0:
            raise ValueError("logit_sensitivity must be >= 0")
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError("compliance must lie in [0, 1]")
        if self.time_unit <= 0:
            raise ValueError("time_unit must be positive")


@dataclass(frozen=True)
class ChoiceSet:
    od: tuple[str, str]
    primary: str  # route whose share the split/guidance value addresses
    alternate: str


@dataclass(frozen=True)
class RegionLeg:
    """What a route does inside one region: entry point, exit gate, target."""

    route: str
    entry: str  # "int" | "bnd" | "ramp"
    exit_family: int  # EXIT_INTERNAL | EXIT_BOUNDARY | EXIT_RAMP
    ramp_target: str | None = None  # expressway name for EXIT_RAMP legs

    @property
    def path_class(self) -> str:
        exit_key = {EXIT_INTERNAL: "int", EXIT_BOUNDARY: "bnd", EXIT_RAMP: "ramp"}[self.exit_family]
        return f"{self.entry}-{exit_key}"


def _mirror(rid: str) -> str:
    swap = {"1": "2", "2": "1", "E12": "E21", "E21": "E12"}
    return "-".join(swap[p] for p in rid.split("-"))


def _route_nodes(rid: str) -> tuple[str, ...]:
    # Intra-system ids ("1-1", "E12-E12") traverse a single system.
    parts = rid.split("-")
    nodes = [parts[0]]
    for p in parts[1:]:
        if p != nodes[-1]:
            nodes.append(p)
    return tuple(nodes)


_BASE_ROUTE_IDS = (
    "1-1",
    "1-2",
    "1-E12-2",
    "1-E12",
    "1-2-E12",
    "1-E21",
    "E12-1",
    "E12-2",
    "E12-1-2",
    "E12-E12",
)

_BASE_CHOICE_SETS = (
    (("1", "2"), "1-2", "1-E12-2"),
    (("1", "E12"), "1-E12", "1-2-E12"),
    (("E12", "2"), "E12-2", "E12-1-2"),
)


def _route_od(rid: str) -> tuple[str, str]:
    parts = rid.split("-")
    return (parts[0], parts[-1])


class RouteTable:
    """The full enumerated route set with all static index structure.

    Exposes, per expressway, the routing needed by the CTM (entry/exit ramps)
    and, per region, the leg list with path classes, exit families and the
    wiring that moves vehicles between systems. All wiring is expressed as
    integer index arrays into the per-system route axes so the simulator can
    gather/scatter without string lookups.
    """

    def __init__(self) -> None:
        ids = list(_BASE_ROUTE_IDS) + [_mirror(r) for r in _BASE_ROUTE_IDS]
        self.routes: tuple[Route, ...] = tuple(
            Route(rid=r, od=_route_od(r), nodes=_route_nodes(r)) for r in ids
        )
        self.route_ids: tuple[str, ...] = tuple(r.rid for r in self.routes)
        self.index = {r.rid: i for i, r in enumerate(self.routes)}
        self.n_routes = len(self.routes)

        css = list(_BASE_CHOICE_SETS) + [
            ((_mirror(a), _mirror(b)), _mirror(p), _mirror(q)) for (a, b), p, q in _BASE_CHOICE_SETS
        ]
        self.choice_sets: tuple[ChoiceSet, ...] = tuple(
            ChoiceSet(od=od, primary=p, alternate=q) for od, p, q in css
        )
        self.od_classes: tuple[tuple[str, str], ...] = tuple(
            dict.fromkeys(r.od for r in self.routes)
        )
        self.od_index = {od: i for i, od in enumerate(self.od_classes)}
        self.n_od = len(self.od_classes)

        self._build_expressways()
        self._build_region_legs()
        self._build_demand_map()
        self._build_wiring()

    # -- expressway structure ------------------------------------------------

    def _build_expressways(self) -> None:
        self.expressway_routes: dict[str, list[str]] = {e: [] for e in EXPRESSWAYS}
        for r in self.routes:
            for e in EXPRESSWAYS:
                if e in r.nodes:
                    self.expressway_routes[e].append(r.rid)
        self.expressway_routing: dict[str, ExpresswayRouting] = {}
        self.expressway_global_idx: dict[str, np.ndarray] = {}
        for e in EXPRESSWAYS:
            rids = self.expressway_routes[e]
            entry, exit_, term = [], [], []
            for rid in rids:
                nodes = self.routes[self.index[rid]].nodes
                pos = nodes.index(e)
                if pos == 0:
                    entry.append(-1)
                else:
                    entry.append(REGIONS.index(nodes[pos - 1]))
                if pos == len(nodes) - 1:
                    exit_.append(-1)
                    term.append(False)
                else:
                    exit_.append(REGIONS.index(nodes[pos + 1]))
                    # trip ends at the off-ramp exit when the next node is final
                    term.append(pos + 1 == len(nodes) - 1)
            self.expressway_routing[e] = ExpresswayRouting(
                route_ids=tuple(rids),
                entry_ramp_region=tuple(entry),
                exit_ramp_region=tuple(exit_),
                terminates_at_exit=tuple(term),
            )
            self.expressway_global_idx[e] = np.array([self.index[r] for r in rids], dtype=int)

    # -- region legs -----------------------------------------------------------

    def _build_region_legs(self) -> None:
        self.region_legs: dict[str, list[RegionLeg]] = {g: [] for g in REGIONS}
        for r in self.routes:
            for pos, node in enumerate(r.nodes):
                if node not in REGIONS:
                    continue
                prev = r.nodes[pos - 1] if pos > 0 else None
                nxt = r.nodes[pos + 1] if pos + 1 < len(r.nodes) else None
                if prev in EXPRESSWAYS and nxt is None:
                    continue  # trip already completed at the off-ramp exit
                entry = "int" if prev is None else ("bnd" if prev in REGIONS else "ramp")
                if nxt is None:
                    family, target = EXIT_INTERNAL, None
                elif nxt in REGIONS:
                    family, target = EXIT_BOUNDARY, None
                else:
                    family, target = EXIT_RAMP, nxt
                self.region_legs[node].append(
                    RegionLeg(route=r.rid, entry=entry, exit_family=family, ramp_target=target)
                )
        self.region_leg_routes: dict[str, np.ndarray] = {}
        self.leg_index: dict[str, dict[str, int]] = {}
        for g in REGIONS:
            legs = self.region_legs[g]
            self.region_leg_routes[g] = np.array([self.index[l.route] for l in legs], dtype=int)
            self.leg_index[g] = {l.route: i for i, l in enumerate(legs)}

    # -- demand ------------------------------------------------------------------

    def _build_demand_map(self) -> None:
        """od -> its route ids; index arrays for vectorized assignment."""
        self.od_routes: dict[tuple[str, str], list[str]] = {od: [] for od in self.od_classes}
        for r in self.routes:
            self.od_routes[r.od].append(r.rid)
        cs_by_od = {c.od: c for c in self.choice_sets}
        single_od, single_route = [], []
        for od, rids in self.od_routes.items():
            if len(rids) == 2:
                c = cs_by_od[od]
                assert set(rids) == {c.primary, c.alternate}, od
            else:
                assert len(rids) == 1, od
                single_od.append(self.od_index[od])
                single_route.append(self.index[rids[0]])
        self.single_od_idx = np.array(single_od, dtype=int)
        self.single_route_idx = np.array(single_route, dtype=int)
        self.cs_od_idx = np.array([self.od_index[c.od] for c in self.choice_sets], dtype=int)
        self.cs_primary_idx = np.array([self.index[c.primary] for c in self.choice_sets], dtype=int)
        self.cs_alternate_idx = np.array([self.index[c.alternate] for c in self.choice_sets], dtype=int)

    # -- wiring ------------------------------------------------------------------

    def _build_wiring(self) -> None:
        # Boundary: legs leaving region g through the perimeter continue as
        # the same route's leg in the other region.
        self.boundary_src: dict[str, np.ndarray] = {}
        self.boundary_dst: dict[str, np.ndarray] = {}
        for g, other in zip(REGIONS, reversed(REGIONS)):
            src, dst = [], []
            for i, leg in enumerate(self.region_legs[g]):
                if leg.exit_family == EXIT_BOUNDARY:
                    src.append(i)
                    dst.append(self.leg_index[other][leg.route])
            self.boundary_src[g] = np.array(src, dtype=int)
            self.boundary_dst[g] = np.array(dst, dtype=int)

        # Ramp transfer: legs leaving region g onto expressway e map to that
        # expressway's route axis at on-ramp side g.
        self.ramp_src: dict[tuple[str, str], np.ndarray] = {}
        self.ramp_dst: dict[tuple[str, str], np.ndarray] = {}
        for g in REGIONS:
            for e in EXPRESSWAYS:
                src, dst = [], []
                eidx = {rid: i for i, rid in enumerate(self.expressway_routes[e])}
                for i, leg in enumerate(self.region_legs[g]):
                    if leg.exit_family == EXIT_RAMP and leg.ramp_target == e:
                        src.append(i)
                        dst.append(eidx[leg.route])
                self.ramp_src[(g, e)] = np.array(src, dtype=int)
                self.ramp_dst[(g, e)] = np.array(dst, dtype=int)

        # Off-ramp: continuing routes re-enter the region's leg axis; the
        # rest complete their trip at the ramp exit.
        self.offramp_cont_src: dict[tuple[str, str], np.ndarray] = {}
        self.offramp_cont_dst: dict[tuple[str, str], np.ndarray] = {}
        self.offramp_term_mask: dict[tuple[str, str], np.ndarray] = {}
        for e in EXPRESSWAYS:
            routing = self.expressway_routing[e]
            for gi, g in enumerate(REGIONS):
                src, dst = [], []
                term = np.zeros(len(routing.route_ids), dtype=bool)
                for ri, rid in enumerate(routing.route_ids):
                    if routing.exit_ramp_region[ri] != gi:
                        continue
                    if routing.terminates_at_exit[ri]:
                        term[ri] = True
                    else:
                        src.append(ri)
                        dst.append(self.leg_index[g][rid])
                self.offramp_cont_src[(e, g)] = np.array(src, dtype=int)
                self.offramp_cont_dst[(e, g)] = np.array(dst, dtype=int)
                self.offramp_term_mask[(e, g)] = term


_TABLE: RouteTable | None = None


def route_table() -> RouteTable:
    """The (immutable) route table; built once per process."""
    global _TABLE
    if _TABLE is None:
        _TABLE = RouteTable()
    return _TABLE


def logit_split(
    time_a: np.ndarray | float, time_b: np.ndarray | float, params: RouteChoiceParams
) -> np.ndarray:
    """Probability of route a under the binary logit model.

    theta_a = exp(-mu T_a) / (exp(-mu T_a) + exp(-mu T_b)), computed as a
    stable sigmoid of the time difference so equal shifts of both travel
    times cancel exactly.
    """
    mu = params.logit_sensitivity / params.time_unit
    gap = mu * (np.asarray(time_a, dtype=float) - np.asarray(time_b, dtype=float))
    return 1.0 / (1.0 + np.exp(np.clip(gap, -700.0, 700.0)))


def blend_compliance(
    driver: np.ndarray | float, guidance: np.ndarray | float, compliance: float
) -> np.ndarray:
    """Realized split: drivers move a fraction epsilon toward the guidance."""
    driver = np.asarray(driver, dtype=float)
    return driver + compliance * (np.asarray(guidance, dtype=float) - driver)


def assign_demand(
    od_demand: np.ndarray, realized_splits: np.ndarray, table: RouteTable
) -> np.ndarray:
    """Split OD demand rates onto routes.

    od_demand: (..., n_od) in table.od_classes order; realized_splits:
    (..., n_choice_sets) as the primary route's share. Per OD the route
    demands sum to the OD demand exactly (the alternate gets the remainder).
    """
    od_demand = np.asarray(od_demand, dtype=float)
    splits = np.asarray(realized_splits, dtype=float)
    shape = np.broadcast_shapes(od_demand.shape[:-1], splits.shape[:-1])
    out = np.zeros(shape + (table.n_routes,))
    out[..., table.single_route_idx] = od_demand[..., table.single_od_idx]
    cs_demand = od_demand[..., table.cs_od_idx]
    primary = splits * cs_demand
    out[..., table.cs_primary_idx] = primary
    out[..., table.cs_alternate_idx] = cs_demand - primary
    return out


# -- travel times ---------------------------------------------------------------

SPEED_FLOOR = 0.1  # m/s; keeps jammed segments finite for the logit


@dataclass(frozen=True)
class _Segment:
    kind: str  # "region" | "onramp" | "offramp" | "span"
    system: str
    a: int = 0  # span start cell, 1-based
    b: int = 0  # span end cell, 1-based
    path_class: str = ""
    region: str = ""


def build_time_programs(
    table: RouteTable, on_cells: dict[str, tuple[int, int]], off_cells: dict[str, tuple[int, int]], cell_count: dict[str, int]
) -> dict[str, tuple[_Segment, ...]]:
    """Per-route composition of travel-time segments for a given topology.

    A mainline span covers both endpoint cells inclusively; a route entering
    at a merge cell and leaving at a diverge cell pays every traversed cell.
    """
    programs: dict[str, tuple[_Segment, ...]] = {}
    for r in table.routes:
        segs: list[_Segment] = []
        for pos, node in enumerate(r.nodes):
            prev = r.nodes[pos - 1] if pos > 0 else None
            nxt = r.nodes[pos + 1] if pos + 1 < len(r.nodes) else None
            if node in REGIONS:
                if prev in EXPRESSWAYS and nxt is None:
                    continue  # destination reached at the off-ramp exit
                entry = "int" if prev is None else ("bnd" if prev in REGIONS else "ramp")
                exit_key = "int" if nxt is None else ("bnd" if nxt in REGIONS else "ramp")
                segs.append(
                    _Segment(kind="region", system=node, path_class=f"{entry}-{exit_key}")
                )
            else:
                gi_in = REGIONS.index(prev) if prev is not None else -1
                gi_out = REGIONS.index(nxt) if nxt is not None else -1
                if prev is not None:
                    segs.append(_Segment(kind="onramp", system=node, region=prev))
                    start = on_cells[node][gi_in]
                else:
                    start = 1
                end = off_cells[node][gi_out] if nxt is not None else cell_count[node]
                segs.append(_Segment(kind="span", system=node, a=start, b=end))
                if nxt is not None:
                    segs.append(_Segment(kind="offramp", system=node, region=nxt))
        programs[r.rid] = tuple(segs)
    return programs


def evaluate_time_programs(
    programs: dict[str, tuple[_Segment, ...]],
    table: RouteTable,
    region_speed: dict[str, np.ndarray],
    trip_length: dict[str, "np.ndarray | dict"],
    mainline_speed: dict[str, np.ndarray],
    on_speed: dict[str, np.ndarray],
    off_speed: dict[str, np.ndarray],
    cell_length: dict[str, float],
) -> np.ndarray:
    """Travel time (s) per route, stacked on a trailing route axis.

    Speeds are floored so jammed segments stay finite. mainline_speed[e] has
    shape (..., L); per-cell times are cumulated once and spans become two
    gathers.
    """
    cum: dict[str, np.ndarray] = {}
    for e, v in mainline_speed.items():
        t_cell = cell_length[e] / np.maximum(v, SPEED_FLOOR)
        c = np.cumsum(t_cell, axis=-1)
        cum[e] = np.concatenate([np.zeros_like(c[..., :1]), c], axis=-1)
    times = []
    for r in table.routes:
        t = None
        for seg in programs[r.rid]:
            if seg.kind == "region":
                v = np.maximum(region_speed[seg.system], SPEED_FLOOR)
                part = trip_length[seg.system][seg.path_class] / v
            elif seg.kind == "span":
                part = cum[seg.system][..., seg.b] - cum[seg.system][..., seg.a - 1]
            elif seg.kind == "onramp":
                gi = REGIONS.index(seg.region)
                part = cell_length[seg.system] / np.maximum(on_speed[seg.system][..., gi], SPEED_FLOOR)
            else:
                gi = REGIONS.index(seg.region)
                part = cell_length[seg.system] / np.maximum(off_speed[seg.system][..., gi], SPEED_FLOOR)
            t = part if t is None else t + part
        times.append(t)
    return np.stack(np.broadcast_arrays(*times), axis=-1)
