"""Virtual grid enumeration and the contraction cost model.

Every contraction folds to C = A * B with A an m-by-k matrix holding z
nonzeros, B k-by-n dense and C m-by-n dense.  A virtual grid (p1, p2, p3)
splits k over the first axis, m over the second and n over the third; each
tensor is distributed over its two axes and replicated along the third, so
per-process traffic is z/(p1*p2) for A copies, k*n/(p1*p3) for B copies and
m*n/(p2*p3) for the partial-output reduction.  Degenerate grids recover the
1D (replicate one tensor) and 2D (keep one tensor local) layouts: an axis
of extent one moves no words, and those terms drop from the layout cost
while the full three-term expression is still reported.

All predicted quantities are word counts with unit constants; a tunable
prefactor per term is exposed through ``CostConfig``.  Redistribution of
all three tensors into the contraction layout is charged by default.  The
piecewise communication lower bound embeds the densest z1-by-z2 block of A
into a dense multiply and applies the rectangular dense bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

__all__ = [
    "ContractionPlan",
    "CostConfig",
    "CostRecord",
    "MemoryLimitError",
    "ProblemShape",
    "choose_plan",
    "enumerate_grids",
    "lower_bound",
    "predict_costs",
]


class MemoryLimitError(RuntimeError):
    """No enumerated grid satisfies the per-process memory constraint."""


@dataclass(frozen=True)
class ProblemShape:
    """Folded contraction: A is m-by-k with z nonzeros, B k-by-n, C m-by-n.

    ``p`` is the virtual process count and ``memory`` the per-process
    element capacity (infinite by default).
    """

    m: int
    k: int
    n: int
    z: int
    p: int
    memory: float = math.inf

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise ValueError(f"matrix dimensions must be positive, got {self}")
        if not 1 <= self.z <= self.m * self.k:
            raise ValueError(f"nonzero count {self.z} outside [1, {self.m * self.k}]")
        if self.p < 1:
            raise ValueError(f"process count must be positive, got {self.p}")


@dataclass(frozen=True)
class CostConfig:
    """Unit prefactors for each cost term and the balance factor h."""

    alpha_z: float = 1.0
    alpha_kn: float = 1.0
    alpha_mn: float = 1.0
    alpha_redist: float = 1.0
    alpha_flops: float = 1.0
    h: float = 2.0
    charge_redistribution: bool = True


DEFAULT_CONFIG = CostConfig()


@dataclass
class CostRecord:
    """Predicted costs of one grid for one problem shape."""

    grid: tuple
    flops: float
    w_redist: float
    w_3d: float
    w_1d: Optional[float]
    w_2d: Optional[float]
    w_layout: float
    w_total: float
    feasible: bool
    mem_required: float


@dataclass
class ContractionPlan:
    """Chosen grid with its dimension assignment and predicted costs."""

    shape: ProblemShape
    grid: tuple
    assignment: dict
    replicated: tuple
    predicted: CostRecord
    lower_bound: float
    w_total_simplified: float

    def to_json(self) -> str:
        pred = self.predicted
        return json.dumps(
            {
                "grid": list(self.grid),
                "F": pred.flops,
                "W_redist": pred.w_redist,
                "W_1D": pred.w_1d,
                "W_2D": pred.w_2d,
                "W_3D": pred.w_3d,
                "W_total": pred.w_total,
                "W_total_simplified": self.w_total_simplified,
                "feasible": pred.feasible,
                "lower_bound": self.lower_bound,
                "assignment": self.assignment,
                "replicated": list(self.replicated),
            }
        )


def enumerate_grids(p: int) -> list:
    """All ordered factor triples of p, lexicographically sorted."""
    if p < 1:
        raise ValueError(f"process count must be positive, got {p}")
    divisors = [d for d in range(1, p + 1) if p % d == 0]
    grids = []
    for p1 in divisors:
        rest = p // p1
        for p2 in (d for d in divisors if rest % d == 0):
            grids.append((p1, p2, rest // p2))
    grids.sort()
    return grids


def predict_costs(shape: ProblemShape, grid, config: CostConfig = DEFAULT_CONFIG) -> CostRecord:
    """Evaluate the cost model for one grid; infeasibility is flagged, not fatal."""
    p1, p2, p3 = grid
    if p1 * p2 * p3 != shape.p:
        raise ValueError(f"grid {grid} does not factor p={shape.p}")
    m, k, n, z = float(shape.m), float(shape.k), float(shape.n), float(shape.z)
    t_z = config.alpha_z * z / (p1 * p2)
    t_kn = config.alpha_kn * k * n / (p1 * p3)
    t_mn = config.alpha_mn * m * n / (p2 * p3)
    w_3d = t_z + t_kn + t_mn
    # Axes of extent one replicate nothing: the corresponding term moves no
    # words under the block schedule, which is exactly the 1D/2D layouts.
    w_comm = (t_z if p3 > 1 else 0.0) + (t_kn if p2 > 1 else 0.0) + (t_mn if p1 > 1 else 0.0)
    nontrivial = sum(1 for q in grid if q > 1)
    w_1d = w_comm if nontrivial <= 1 else None
    w_2d = w_comm if nontrivial == 2 else None
    w_layout = min(x for x in (w_1d, w_2d, w_3d) if x is not None)
    w_redist = config.alpha_redist * (z + k * n + m * n) / shape.p
    flops = config.alpha_flops * n * z / shape.p
    mem_required = min(config.h * z / (p1 * p2), k * n / (p1 * p3), m * n / (p2 * p3))
    feasible = shape.memory >= mem_required
    w_total = (w_redist if config.charge_redistribution else 0.0) + w_layout
    return CostRecord(
        grid=tuple(grid), flops=flops, w_redist=w_redist, w_3d=w_3d,
        w_1d=w_1d, w_2d=w_2d, w_layout=w_layout, w_total=w_total,
        feasible=feasible, mem_required=mem_required,
    )


def choose_plan(shape: ProblemShape, config: CostConfig = DEFAULT_CONFIG) -> ContractionPlan:
    """Cheapest feasible grid; ties break to the lexicographically smallest."""
    best: Optional[CostRecord] = None
    best_w3d = math.inf
    for grid in enumerate_grids(shape.p):
        rec = predict_costs(shape, grid, config)
        if not rec.feasible:
            continue
        best_w3d = min(best_w3d, rec.w_3d)
        if best is None or rec.w_total < best.w_total:
            best = rec
    if best is None:
        raise MemoryLimitError(
            f"no grid over p={shape.p} fits per-process memory {shape.memory}"
        )
    p1, p2, p3 = best.grid
    replicated = tuple(
        name
        for name, extent in (("A", p3), ("B", p2), ("C", p1))
        if extent > 1
    )
    return ContractionPlan(
        shape=shape,
        grid=best.grid,
        assignment={"k": 1, "m": 2, "n": 3},
        replicated=replicated,
        predicted=best,
        lower_bound=lower_bound(shape),
        w_total_simplified=best_w3d,
    )


def lower_bound(shape: ProblemShape) -> float:
    """Piecewise worst-case communication lower bound for the folded problem.

    The densest z1-by-z2 block of A forces a dense multiply against the
    first z2 columns of B, so the rectangular dense bound applies with
    r1 <= r2 <= r3 the sorted values of (n, z1, z2).  Real-valued z1, z2
    are floored and clamped to at least one.
    """
    m, k, n, z, p = shape.m, shape.k, shape.n, shape.z, shape.p
    z1 = max(1.0, math.floor(min(m, math.sqrt(z))))
    z2 = max(1.0, math.floor(min(k, z / z1)))
    r1, r2, r3 = sorted((float(n), z1, z2))
    if p > r2 * r3 / r1**2:
        mem_term = 0.0
        if math.isfinite(shape.memory) and shape.memory > 0:
            mem_term = r1 * r2 * r3 / (p * math.sqrt(shape.memory))
        return mem_term + (r1 * r2 * r3 / p) ** (2.0 / 3.0)
    if p > r3 / r2:
        return r1 * math.sqrt(r2 * r3 / p)
    return r1 * r2
