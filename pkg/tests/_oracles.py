"""Independent reference implementations used as test oracles.

Deliberately written with plain Python loops and floats, no shared code with
the package, so they can catch structural mistakes in the vectorized paths.
"""

from __future__ import annotations


def scalar_ctm(
    n_cells: int,
    cell_length: float,
    free_flow_speed: float,
    capacity: float,
    jam_density: float,
    wave_speed: float,
    demand: list[float],
    dt: float,
) -> list[list[float]]:
    """Classic single-class CTM with a virtual queue upstream of cell 1.

    demand[t] is the exogenous arrival rate (veh/s) at step t; the returned
    history holds the cell densities after each step.
    """
    k = [0.0] * n_cells
    queue = 0.0
    history: list[list[float]] = []
    for t in range(len(demand)):
        sending = [min(free_flow_speed * ki, capacity) for ki in k]
        receiving = [min(wave_speed * (jam_density - ki), capacity) for ki in k]
        flow = [0.0] * (n_cells + 1)
        offered = demand[t] + queue / dt
        flow[0] = min(offered, receiving[0])
        for i in range(1, n_cells):
            flow[i] = min(sending[i - 1], receiving[i])
        flow[n_cells] = sending[n_cells - 1]
        queue = max(0.0, queue + dt * (demand[t] - flow[0]))
        for i in range(n_cells):
            k[i] += dt / cell_length * (flow[i] - flow[i + 1])
        history.append(list(k))
    return history


def grid_search_min(objective, n_vars: int, levels=(0.0, 0.5, 1.0)):
    """Exhaustive enumeration over a small grid; returns (best_x, best_f)."""
    import itertools

    best_x, best_f = None, float("inf")
    for point in itertools.product(levels, repeat=n_vars):
        f = float(objective(list(point)))
        if f < best_f:
            best_x, best_f = list(point), f
    return best_x, best_f
