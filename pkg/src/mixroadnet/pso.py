"""Particle swarm minimizer over a box, with batched objective evaluation.

Constriction-style defaults (w = 0.729, c1 = c2 = 1.494). Positions leaving
the box are reflected back inside and the offending velocity component is
reversed. Known-good candidates (e.g. the uncontrolled baseline) can be
injected into the initial swarm, which makes the returned best never worse
than them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 40
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    iterations: int = 60

    def __post_init__(self) -> None:
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class PsoResult:
    x: np.ndarray
    fun: float
    history: np.ndarray  # best objective after the initial evaluation and each iteration


def pso_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    config: PsoConfig,
    rng: np.random.Generator,
    init: Sequence[np.ndarray] | None = None,
) -> PsoResult:
    """Minimize a batched objective f: (P, D) -> (P,) over the box [lower, upper]."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid bounds")
    dim = lower.size
    p = config.swarm_size

    x = rng.uniform(lower, upper, size=(p, dim))
    if init is not None:
        for i, cand in enumerate(init[:p]):
            x[i] = np.clip(np.asarray(cand, dtype=float).ravel(), lower, upper)
    v = np.zeros((p, dim))

    f = np.asarray(objective(x), dtype=float)
    pbest_x = x.copy()
    pbest_f = f.copy()
    g = int(np.argmin(pbest_f))
    gbest_x = pbest_x[g].copy()
    gbest_f = float(pbest_f[g])
    history = [gbest_f]

    for _ in range(config.iterations):
        r1 = rng.uniform(size=(p, dim))
        r2 = rng.uniform(size=(p, dim))
        v = (
            config.inertia * v
            + config.cognitive * r1 * (pbest_x - x)
            + config.social * r2 * (gbest_x - x)
        )
        x = x + v
        below = x < lower
        above = x > upper
        x = np.where(below, 2.0 * lower - x, x)
        x = np.where(above, 2.0 * upper - x, x)
        v = np.where(below | above, -v, v)
        x = np.clip(x, lower, upper)  # guard against reflection overshoot

        f = np.asarray(objective(x), dtype=float)
        improved = f < pbest_f
        pbest_x[improved] = x[improved]
        pbest_f[improved] = f[improved]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest_f = float(pbest_f[g])
            gbest_x = pbest_x[g].copy()
        history.append(gbest_f)

    return PsoResult(x=gbest_x, fun=gbest_f, history=np.array(history))
