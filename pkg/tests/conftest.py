"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import heapq
import itertools

import numpy as np
import pytest

from tenalg import (
    AlgebraicStructure,
    ExpressionSpec,
    Tensor,
    make_standard_ring,
    make_tropical_semiring,
)


def integer_ring() -> AlgebraicStructure:
    """Exact ring on Python integers, for exact-equality einsum checks."""
    return AlgebraicStructure(
        kind="ring",
        elem_size=8,
        add_id=0,
        add_op=lambda a, b: a + b,
        add_inv=lambda a: -a,
        mul_id=1,
        mul_op=lambda a, b: a * b,
        abs_value=abs,
        name="int_ring",
    )


def random_tensor(rng, dims, structure, sparse, density=0.5) -> Tensor:
    t = Tensor(len(dims), tuple(dims), None, sparse, structure)
    hint = structure.kernel_hint or structure.name
    for lin in range(t.size):
        if density < 1.0 and rng.random() >= density:
            continue
        if hint == "real":
            t._set_stored(lin, float(rng.integers(1, 9)) / 2.0)
        else:
            t._set_stored(lin, int(rng.integers(1, 9)))
    return t


def logical_values(t: Tensor):
    return [t.get(idx) for idx in itertools.product(*(range(d) for d in t.dims))]


def tensors_match(a: Tensor, b: Tensor, rel: float = 0.0) -> bool:
    """Logical equality over the full index space, with relative slack."""
    va, vb = logical_values(a), logical_values(b)
    if rel == 0.0:
        return va == vb
    return all(
        abs(x - y) <= rel * max(1.0, abs(x), abs(y)) for x, y in zip(va, vb)
    )


def dijkstra_distances(A: Tensor, source: int = 0) -> list:
    """Single-source distances on nonnegative weights; A[i][j] is edge j->i."""
    n = A.dims[0]
    inf = A.structure.add_id
    out_edges = [[] for _ in range(n)]
    for (i, j), w in A.logical_nonzeros():
        if i != j:
            out_edges[j].append((i, int(w)))
    dist = [inf] * n
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in out_edges[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


class SpecCase:
    """A randomized expression with cloned outputs for each execution path."""

    def __init__(self, structure, out_dims, out_idx, operands, coefficient,
                 accumulate, prefill, loop_space):
        self.structure = structure
        self.out_dims = out_dims
        self.out_idx = out_idx
        self.operands = operands  # list of (tensor, index string)
        self.coefficient = coefficient
        self.accumulate = accumulate
        self.prefill = prefill
        self.loop_space = loop_space

    def fresh_output(self) -> Tensor:
        out = Tensor(len(self.out_dims), self.out_dims, None, False, self.structure)
        for lin, val in self.prefill:
            out._set_stored(lin, val)
        return out

    def spec_for(self, out: Tensor) -> ExpressionSpec:
        return ExpressionSpec(
            output=out[self.out_idx],
            operands=tuple(t[idx] for t, idx in self.operands),
            coefficient=self.coefficient,
            accumulate=self.accumulate,
        )


def random_spec_case(rng, max_loop_space=20000) -> SpecCase:
    """Two-operand spec exercising every index-role combination.

    Sizes are drawn per character (<= 6), orders stay <= 4 per tensor, and
    one operand may be stored sparse (never both, matching the supported
    contraction forms).  Coefficients use {1, 0.5} on the real ring and the
    analogous exact values on integer structures.
    """
    kind = rng.integers(0, 3)
    if kind == 0:
        structure = make_standard_ring()
        coeffs = [None, 0.5]
    elif kind == 1:
        structure = integer_ring()
        coeffs = [None, 2]
    else:
        structure = make_tropical_semiring()
        coeffs = [None, 1]

    while True:
        n_batch = int(rng.integers(0, 2))
        n_k = int(rng.integers(0, 3))
        n_m = int(rng.integers(0, 3 - n_batch))
        n_n = int(rng.integers(0, 3 - n_batch))
        n_sum_a = int(rng.integers(0, 2))
        n_sum_b = int(rng.integers(0, 2))
        n_mapped = int(rng.integers(0, 2))
        order_a = n_batch + n_m + n_k + n_sum_a
        order_b = n_batch + n_n + n_k + n_sum_b
        order_out = n_batch + n_m + n_n + n_mapped
        if not (1 <= order_a <= 4 and 1 <= order_b <= 4 and order_out <= 4):
            continue
        letters = iter("abcdefghijkl")
        batch = [next(letters) for _ in range(n_batch)]
        ks = [next(letters) for _ in range(n_k)]
        ms = [next(letters) for _ in range(n_m)]
        ns = [next(letters) for _ in range(n_n)]
        sa = [next(letters) for _ in range(n_sum_a)]
        sb = [next(letters) for _ in range(n_sum_b)]
        mp = [next(letters) for _ in range(n_mapped)]
        chars = batch + ks + ms + ns + sa + sb + mp
        sizes = {c: int(rng.integers(1, 7)) for c in chars}

        a_chars = batch + ms + ks + sa
        b_chars = batch + ns + ks + sb
        out_chars = batch + ms + ns + mp
        rng.shuffle(a_chars)
        rng.shuffle(b_chars)
        rng.shuffle(out_chars)
        a_idx = "".join(a_chars)
        b_idx = "".join(b_chars)
        out_idx = "".join(out_chars)
        # Occasionally walk a diagonal by repeating a character.
        if a_chars and len(a_chars) < 4 and rng.random() < 0.3:
            a_idx += a_chars[int(rng.integers(0, len(a_chars)))]
        if out_chars and len(out_chars) < 4 and rng.random() < 0.2:
            out_idx += out_chars[int(rng.integers(0, len(out_chars)))]

        space = 1
        for c in set(a_idx + b_idx + out_idx):
            space *= sizes[c]
        if space > max_loop_space:
            continue
        break

    sparse_pick = int(rng.integers(0, 3))  # 0 dense/dense, 1 sparse A, 2 sparse B
    a_dims = tuple(sizes[c] for c in a_idx)
    b_dims = tuple(sizes[c] for c in b_idx)
    A = random_tensor(rng, a_dims, structure, sparse=sparse_pick == 1,
                      density=0.6 if sparse_pick == 1 else 1.0)
    B = random_tensor(rng, b_dims, structure, sparse=sparse_pick == 2,
                      density=0.6 if sparse_pick == 2 else 1.0)
    out_dims = tuple(sizes[c] for c in out_idx)
    accumulate = bool(rng.integers(0, 2))
    prefill = []
    if accumulate:
        tmp = random_tensor(rng, out_dims, structure, sparse=False, density=0.5)
        prefill = tmp.stored_items()
    coefficient = coeffs[int(rng.integers(0, len(coeffs)))]
    return SpecCase(
        structure=structure, out_dims=out_dims, out_idx=out_idx,
        operands=[(A, a_idx), (B, b_idx)], coefficient=coefficient,
        accumulate=accumulate, prefill=prefill, loop_space=space,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
