"""Application algorithms on the library's expression surface.

Each driver is written the way a user of the indexed-expression interface
would write it: Jacobi iteration over the real ring, single-source and
all-pairs shortest paths over min-plus structures, and the third-order
perturbation energy from electronic structure, built from fourth-order
block tensors.  Every algorithm has an independent oracle next to it in
the test suite; the Floyd-Warshall oracle lives here because two of the
shortest-path drivers are checked against it.

Graph convention: ``A[i][j]`` holds the weight of the edge from j to i,
the diagonal holds the multiplicative identity (zero-length self paths)
and absent edges read as the additive identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import (
    ElementFunction,
    ElementTransform,
    PathElement,
    make_path_semiring,
    make_standard_ring,
    make_tropical_semiring,
)
from .tensor import Tensor, matrix, read_matrix_market, scalar, vector

__all__ = [
    "ConvergenceError",
    "Graph",
    "MP3Inputs",
    "apsp_dense_doubling",
    "apsp_tiskin",
    "bellman_ford",
    "floyd_warshall_oracle",
    "graph_from_matrix_market",
    "jacobi",
    "make_mp3_inputs",
    "mp3_energy",
    "random_digraph",
]


class ConvergenceError(RuntimeError):
    pass


# ------------------------------------------------------------------- graphs


@dataclass
class Graph:
    """Vertex count plus a min-plus adjacency tensor."""

    n: int
    adjacency: Tensor


def random_digraph(
    n: int,
    density: float,
    seed: int,
    weight_range: Optional[tuple] = None,
    structure=None,
    world=None,
) -> Graph:
    """Random directed graph with a zero diagonal and seeded integer weights.

    Edge weights are uniform over ``weight_range`` (default [1, n^2]); each
    off-diagonal edge is present independently with the given probability.
    """
    ts = structure if structure is not None else make_tropical_semiring()
    lo, hi = weight_range if weight_range is not None else (1, n * n)
    rng = np.random.default_rng(seed)
    A = matrix(n, sparse=True, structure=ts, world=world)
    pairs = [(A.linear_index((i, i)), ts.mul_id) for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                pairs.append((A.linear_index((i, j)), int(rng.integers(lo, hi + 1))))
    A.write(pairs)
    return Graph(n=n, adjacency=A)


def graph_from_matrix_market(path, structure=None, world=None) -> Graph:
    """Load an adjacency matrix and force the zero diagonal convention."""
    ts = structure if structure is not None else make_tropical_semiring()
    A = read_matrix_market(path, ts, world=world)
    if A.dims[0] != A.dims[1]:
        raise ValueError(f"adjacency matrices must be square, got {A.dims}")
    A.write([(A.linear_index((i, i)), ts.mul_id) for i in range(A.dims[0])])
    return Graph(n=A.dims[0], adjacency=A)


# ----------------------------------------------------------- linear algebra


def jacobi(A: Tensor, b: Tensor, tol: float = 1e-6, max_iter: int = 1000) -> Tensor:
    """Solve A x = b by Jacobi iteration; converges for diagonally dominant A.

    The diagonal is inverted elementwise through a transform, the remainder
    R = A - diag(A) drives the update x <- d * (b - R x), and iteration
    stops once the residual 2-norm drops to ``tol``.
    """
    n = A.dims[0]
    s = A.structure
    d = vector(n, structure=s, world=A.world)
    d["i"] = A["ii"]
    for i in range(n):
        if d.get(i) == 0.0:
            raise ZeroDivisionError(f"zero diagonal entry at row {i}")
    ElementTransform(1, lambda v: 1.0 / v)(d["i"])

    R = matrix(n, sparse=True, structure=s, world=A.world)
    R["ij"] = A["ij"]
    R["ii"] = 0.0

    x = vector(n, structure=s, world=A.world)
    r = vector(n, structure=s, world=A.world)
    for _ in range(max_iter):
        x["i"] = -(R["ij"] * x["j"])
        x["i"] += b["i"]
        x["i"] *= d["i"]

        r["i"] = b["i"]
        r["i"] -= A["ij"] * x["j"]
        if r.norm2() <= tol:
            return x
    raise ConvergenceError(f"no convergence within {max_iter} iterations")


# ------------------------------------------------------------ shortest paths


def bellman_ford(A: Tensor, P: Tensor, n: int) -> bool:
    """Relax all edges until the distance vector stops changing.

    ``P`` must hold the multiplicative identity at the source and the
    additive identity elsewhere; it is updated in place.  Returns False if
    distances still change after n rounds, which signals a negative cycle.
    Min-plus relaxation only ever shortens distances, so elementwise
    equality of consecutive iterates is the convergence test.
    """
    rounds = 0
    while True:
        if rounds == n:
            return False
        rounds += 1
        before = P.stored_items()
        P["i"] += A["ij"] * P["j"]
        if P.stored_items() == before:
            return True


def apsp_dense_doubling(A: Tensor) -> Tensor:
    """All-pairs distances by repeated min-plus squaring.

    With a zero diagonal, A equals I + A, so log2(n) squarings of the form
    D += D * D close the matrix.  Returns a new tensor.
    """
    n = A.dims[0]
    D = A.copy()
    l = 1
    while l < n:
        D["ij"] += D["ik"] * D["kj"]
        l <<= 1
    return D


def apsp_tiskin(A: Tensor, nnz_log: Optional[list] = None) -> Tensor:
    """All-pairs distances by sparse path doubling.

    Entries are lifted to (weight, hops) pairs; at level l the entries whose
    recorded shortest path has exactly l hops are split off into a sparse
    matrix, and one multiply by it extends every shortest path of up to l
    hops to up to 2l.  The number of exactly-l-hop entries is appended to
    ``nnz_log`` per level (it is expected, not required, to shrink
    geometrically).  Weights are projected back to integers at the end.
    """
    n = A.dims[0]
    ps = make_path_semiring()
    P = matrix(n, structure=ps, world=A.world)
    lift = ElementFunction(1, lambda w: PathElement(int(w), 1), name="lift")
    P["ij"] = lift(A["ij"])

    l = 1
    while l < n:
        Pl = matrix(n, sparse=True, structure=ps, world=A.world)
        Pl["ij"] = P["ij"]
        hops = l
        Pl.sparsify(lambda p: p.h == hops)
        if nnz_log is not None:
            nnz_log.append(Pl.nnz)
        P["ij"] += Pl["ik"] * P["kj"]
        l <<= 1

    D = matrix(n, structure=A.structure, world=A.world)
    project = ElementFunction(1, lambda p: int(p.w), name="weight")
    D["ij"] = project(P["ij"])
    return D


def floyd_warshall_oracle(A: Tensor) -> Tensor:
    """Textbook all-pairs distances; the work-efficient comparison point.

    Runs the classic triple loop on an extracted integer matrix (row
    updates vectorized) and clamps unreachable cells back to the additive
    identity so results compare exactly with the algebraic drivers.
    """
    n = A.dims[0]
    inf = np.int64(A.structure.add_id)
    W = np.full((n, n), inf, dtype=np.int64)
    for idx, val in A.logical_nonzeros():
        W[idx] = val
    np.fill_diagonal(W, 0)
    for k in range(n):
        np.minimum(W, W[:, k : k + 1] + W[k : k + 1, :], out=W)
        W[W >= inf] = inf
    D = matrix(n, structure=A.structure)
    D._dense = [int(v) for v in W.ravel()]
    return D


# ------------------------------------------------------- electronic structure


@dataclass
class MP3Inputs:
    """Synthetic spin-integrated blocks for the third-order energy.

    ``m`` occupied and ``n`` virtual orbitals; the energy vectors keep the
    elementwise denominator -e_a - e_b + e_i + e_j bounded away from zero.
    """

    m: int
    n: int
    Ei: Tensor
    Ea: Tensor
    Fab: Tensor
    Fij: Tensor
    Vabij: Tensor
    Vijab: Tensor
    Vabcd: Tensor
    Vijkl: Tensor
    Vaibj: Tensor


def make_mp3_inputs(
    m: int, n: int, density: float, seed: int, sparse: bool = True, world=None
) -> MP3Inputs:
    """Seeded synthetic MP3 blocks at a given two-electron sparsity."""
    r = make_standard_ring()
    rng = np.random.default_rng(seed)

    def dense_block(dims, lo, hi):
        t = Tensor(len(dims), dims, None, False, r, world)
        t.write([(i, float(rng.uniform(lo, hi))) for i in range(t.size)])
        return t

    def v_block(dims):
        t = Tensor(len(dims), dims, None, sparse, r, world)
        pairs = []
        for i in range(t.size):
            if density >= 1.0 or rng.random() < density:
                pairs.append((i, float(rng.uniform(-1.0, 1.0))))
        t.write(pairs)
        return t

    Ei = dense_block((m,), -1.0, 0.0)
    Ea = dense_block((n,), 1.0, 2.0)
    Fab = dense_block((n, n), -0.5, 0.5)
    Fij = dense_block((m, m), -0.5, 0.5)
    return MP3Inputs(
        m=m, n=n, Ei=Ei, Ea=Ea, Fab=Fab, Fij=Fij,
        Vabij=v_block((n, n, m, m)),
        Vijab=v_block((m, m, n, n)),
        Vabcd=v_block((n, n, n, n)),
        Vijkl=v_block((m, m, m, m)),
        Vaibj=v_block((n, m, n, m)),
    )


def mp3_energy(inp: MP3Inputs) -> float:
    """Third-order energy correction from the block contraction sequence.

    Builds the denominator tensor by four broadcast accumulations and an
    elementwise reciprocal, forms the first-order amplitudes T, assembles
    the six contraction terms of Z, folds Z back into T through the
    denominator, and contracts T against the integrals for the energy.
    """
    m, n = inp.m, inp.n
    r = inp.Vabij.structure
    world = inp.Vabij.world
    dims4 = (n, n, m, m)

    D = Tensor(4, dims4, None, False, r, world)
    D["abij"] += inp.Ei["i"]
    D["abij"] += inp.Ei["j"]
    D["abij"] -= inp.Ea["a"]
    D["abij"] -= inp.Ea["b"]
    ElementTransform(1, lambda d: 1.0 / d)(D["abij"])

    T = Tensor(4, dims4, None, False, r, world)
    T["abij"] = inp.Vabij["abij"] * D["abij"]

    Z = Tensor(4, dims4, None, False, r, world)
    Z["abij"] = inp.Vijab["ijab"]
    Z["abij"] += inp.Fab["af"] * T["fbij"]
    Z["abij"] -= inp.Fij["ni"] * T["abnj"]
    Z["abij"] += 0.5 * inp.Vabcd["abef"] * T["efij"]
    Z["abij"] += 0.5 * inp.Vijkl["mnij"] * T["abmn"]
    Z["abij"] -= inp.Vaibj["amei"] * T["ebmj"]

    T["abij"] += Z["abij"] * D["abij"]

    return (T["abij"] * inp.Vabij["abij"]).item()
