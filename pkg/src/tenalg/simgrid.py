"""Simulated processor grids: cyclic ownership, balance, and replay.

Virtual processes never exchange real messages; the block schedule of a
planned contraction is replayed in-process and every transferred word is
tallied.  Collectives are chains: a broadcast sends the block from its home
replica down the axis with each receiver forwarding once, and a reduction
streams partial blocks toward the root, so total words sent always equal
total words received and no process moves more than twice any block.
Sparse blocks count stored nonzeros only; dense blocks count every cell.

Cyclic assignment maps the element with index tuple (i1, i2, ...) to the
process whose coordinate along each mapped grid axis is the index modulo
that axis extent.  Opt-in index randomization applies one seeded
permutation per distinct dimension length (equal lengths share it, so
symmetric tensors stay symmetric) and is invertible via the returned
record.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from . import _kernels
from .algebra import AlgebraicStructure
from .tensor import Tensor

__all__ = [
    "Assignment",
    "PermutationRecord",
    "ReplayTally",
    "SimReport",
    "VirtualWorld",
    "apply_index_permutation",
    "balance_report",
    "cyclic_assign",
    "randomize_indices",
    "replay_block_schedule",
    "replay_summa",
]


@dataclass
class VirtualWorld:
    """A set of virtual processes; tensors constructed on one are planned."""

    p: int
    grid: Optional[tuple] = None
    seed: int = 0
    memory: float = math.inf
    reports: list = field(default_factory=list)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"process count must be positive, got {self.p}")


@dataclass
class SimReport:
    """Per-process ownership and traffic of one replayed execution."""

    nprocs: int
    grid: Optional[tuple]
    per_proc_nnz: list
    words_sent: list
    words_received: list
    predicted_w: Optional[float] = None
    operand_words: Optional[dict] = None  # received words by tensor role A/B/C

    @property
    def max_nnz(self) -> int:
        return max(self.per_proc_nnz, default=0)

    @property
    def mean_nnz(self) -> float:
        if not self.per_proc_nnz:
            return 0.0
        return sum(self.per_proc_nnz) / len(self.per_proc_nnz)

    @property
    def balance_ratio(self) -> float:
        mean = self.mean_nnz
        if mean == 0:
            return 1.0
        return self.max_nnz / mean

    @property
    def total_words(self) -> int:
        return sum(self.words_received)

    @property
    def max_proc_words(self) -> int:
        """Greatest number of words sent and received by any process."""
        return max(
            (s + r for s, r in zip(self.words_sent, self.words_received)),
            default=0,
        )

    def to_json(self) -> dict:
        return {
            "nprocs": self.nprocs,
            "grid": list(self.grid) if self.grid else None,
            "per_proc_nnz": list(self.per_proc_nnz),
            "words_sent": list(self.words_sent),
            "words_received": list(self.words_received),
            "max_nnz": self.max_nnz,
            "mean_nnz": self.mean_nnz,
            "balance_ratio": self.balance_ratio,
            "total_words": self.total_words,
            "max_proc_words": self.max_proc_words,
            "predicted_w": self.predicted_w,
            "operand_words": dict(self.operand_words) if self.operand_words else None,
        }


# ------------------------------------------------------------------ ownership


@dataclass
class Assignment:
    """Cyclic ownership of one tensor over a virtual grid."""

    grid: tuple
    nprocs: int
    counts: list
    indices: Optional[list] = None  # per-process linear indices, sparse only


def cyclic_assign(t: Tensor, grid, dim_map: Optional[Mapping] = None) -> Assignment:
    """Assign elements to processes by index residues along mapped axes.

    ``dim_map`` maps tensor dimensions to grid axes (identity prefix by
    default).  Unmapped grid axes hold the tensor at coordinate zero;
    unmapped tensor dimensions are local to their owner.  Dense tensors
    report counts only; sparse tensors list actual stored indices.
    """
    grid = tuple(int(q) for q in grid)
    if any(q < 1 for q in grid):
        raise ValueError(f"grid extents must be positive, got {grid}")
    if dim_map is None:
        dim_map = {d: d for d in range(min(t.order, len(grid)))}
    axis_of = {}
    for d, a in dim_map.items():
        if not 0 <= d < t.order or not 0 <= a < len(grid):
            raise ValueError(f"dimension map entry {d}->{a} out of range")
        axis_of[d] = a
    if len(set(axis_of.values())) != len(axis_of):
        raise ValueError("each grid axis takes at most one tensor dimension")
    nprocs = 1
    for q in grid:
        nprocs *= q

    strides = [1] * len(grid)
    for i in range(len(grid) - 2, -1, -1):
        strides[i] = strides[i + 1] * grid[i + 1]

    def owner(idx) -> int:
        pid = 0
        for d, a in axis_of.items():
            pid += (idx[d] % grid[a]) * strides[a]
        return pid

    if t.sparse:
        indices = [[] for _ in range(nprocs)]
        for lin, _ in t.stored_items():
            indices[owner(t.tuple_index(lin))].append(lin)
        counts = [len(ix) for ix in indices]
        return Assignment(grid=grid, nprocs=nprocs, counts=counts, indices=indices)

    counts = [0] * nprocs
    unmapped_size = 1
    for d in range(t.order):
        if d not in axis_of:
            unmapped_size *= t.dims[d]
    for coords in np.ndindex(*grid):
        count = unmapped_size
        for d, a in axis_of.items():
            count *= _kernels._cyclic_extent(t.dims[d], coords[a], grid[a])
        for a in range(len(grid)):
            if a not in axis_of.values() and coords[a] != 0:
                count = 0
        pid = sum(c * s for c, s in zip(coords, strides))
        counts[pid] = count
    return Assignment(grid=grid, nprocs=nprocs, counts=counts, indices=None)


def balance_report(assignment: Assignment) -> SimReport:
    """Nonzero-count balance of a cyclic assignment (no traffic fields)."""
    n = assignment.nprocs
    return SimReport(
        nprocs=n,
        grid=assignment.grid,
        per_proc_nnz=list(assignment.counts),
        words_sent=[0] * n,
        words_received=[0] * n,
    )


# -------------------------------------------------------------- randomization


@dataclass
class PermutationRecord:
    """One seeded permutation per distinct dimension length."""

    seed: int
    perms: dict

    def map_index(self, idx, dims, inverse: bool = False) -> tuple:
        out = []
        for i, d in zip(idx, dims):
            p = self.perms[d]
            out.append(int(np.argsort(p)[i]) if inverse else int(p[i]))
        return tuple(out)


def randomize_indices(t: Tensor, seed: int) -> PermutationRecord:
    """Relabel indices with shared per-length seeded permutations, in place.

    Returns the invertible record; pass it to ``apply_index_permutation``
    with ``inverse=True`` to restore the original labeling.
    """
    rng = np.random.default_rng(seed)
    perms = {length: rng.permutation(length) for length in sorted(set(t.dims))}
    record = PermutationRecord(seed=seed, perms=perms)
    apply_index_permutation(t, record)
    return record


def apply_index_permutation(t: Tensor, record: PermutationRecord, inverse: bool = False) -> None:
    """Remap the tensor's storage through the recorded permutations."""
    moves = []
    for lin, val in t.stored_items():
        idx = t.tuple_index(lin)
        nidx = record.map_index(idx, t.dims, inverse=inverse)
        canon, parity, forced = t.canonicalize(nidx)
        if forced:
            raise ValueError("permutation moved an entry onto a forced-zero diagonal")
        if parity < 0:
            val = t.structure.add_inv(val)
        moves.append((t.linear_index(canon), val))
    t.clear()
    for lin, val in moves:
        t._set_stored(lin, val)


# -------------------------------------------------------------------- replay


class ReplayTally:
    """Accumulates per-process ownership and traffic across batch slices."""

    def __init__(self, grid):
        self.grid = tuple(grid)
        p1, p2, p3 = self.grid
        self.nprocs = p1 * p2 * p3
        self.nnz = [0] * self.nprocs
        self.sent = [0] * self.nprocs
        self.received = [0] * self.nprocs
        self.operand_words = {"A": 0, "B": 0, "C": 0}

    def pid(self, i, j, l) -> int:
        _, p2, p3 = self.grid
        return (i * p2 + j) * p3 + l

    def chain_broadcast(self, pids, words: int, role: str) -> None:
        """Home-to-replicas chain: each receiver gets the block once and forwards."""
        if words <= 0 or len(pids) < 2:
            return
        for a, b in zip(pids, pids[1:]):
            self.sent[a] += words
            self.received[b] += words
            self.operand_words[role] += words

    def chain_reduce(self, pids, words: int, role: str) -> None:
        """Partials stream toward pids[0]; every non-root sends its block once."""
        if words <= 0 or len(pids) < 2:
            return
        for a, b in zip(pids[1:], pids):
            self.sent[a] += words
            self.received[b] += words
            self.operand_words[role] += words

    def report(self, predicted_w: Optional[float] = None) -> SimReport:
        return SimReport(
            nprocs=self.nprocs,
            grid=self.grid,
            per_proc_nnz=list(self.nnz),
            words_sent=list(self.sent),
            words_received=list(self.received),
            predicted_w=predicted_w,
            operand_words=dict(self.operand_words),
        )


def replay_block_schedule(
    structure: AlgebraicStructure,
    A: "_kernels.CooMatrix",
    B: "_kernels.DenseMatrix",
    grid,
    tally: ReplayTally,
    workers: int = 1,
) -> list:
    """Replay one folded matmul on the grid, tallying transferred words.

    Axis 1 splits k, axis 2 splits m, axis 3 splits n.  A blocks replicate
    along axis 3, B blocks along axis 2, and partial outputs reduce along
    axis 1 to the axis-origin root, which owns the assembled result.
    Numerically identical to the flat local kernel (exactly so for discrete
    structures; reduction order only reassociates real sums).
    """
    p1, p2, p3 = grid
    M, N = A.nrows, B.ncols
    add_id = structure.add_id

    ablocks = {}
    for i in range(p1):
        for j in range(p2):
            blk = A.block(j, p2, i, p1)
            ablocks[i, j] = blk
            words = blk.words()
            self_pids = [tally.pid(i, j, l) for l in range(p3)]
            tally.chain_broadcast(self_pids, words, "A")
            for pid in self_pids:
                tally.nnz[pid] += blk.nnz

    bblocks = {}
    for i in range(p1):
        for l in range(p3):
            blk = B.block(i, p1, l, p3)
            bblocks[i, l] = blk
            tally.chain_broadcast([tally.pid(i, j, l) for j in range(p2)], blk.words(), "B")

    tasks = [(i, j, l) for i in range(p1) for j in range(p2) for l in range(p3)]

    def compute(key):
        i, j, l = key
        return _kernels.matmul(structure, ablocks[i, j], bblocks[i, l])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(tasks, pool.map(compute, tasks)))
    else:
        results = {key: compute(key) for key in tasks}

    C = [add_id] * (M * N)
    for j in range(p2):
        m_extent = _kernels._cyclic_extent(M, j, p2)
        for l in range(p3):
            n_extent = _kernels._cyclic_extent(N, l, p3)
            cwords = m_extent * n_extent
            tally.chain_reduce([tally.pid(i, j, l) for i in range(p1)], cwords, "C")
            acc = None
            for i in range(p1 - 1, -1, -1):
                part = results[i, j, l]
                acc = part if acc is None else _kernels.merge_partials(structure, part, acc)
            if acc is None:
                continue
            for r in range(m_extent):
                gbase = (j + r * p2) * N + l
                lbase = r * n_extent
                for c in range(n_extent):
                    C[gbase + c * p3] = acc[lbase + c]
    return C


def replay_summa(spec, plan, world: VirtualWorld) -> SimReport:
    """Replay a planned contraction spec; see einsum.execute_planned."""
    from .einsum import execute_planned

    return execute_planned(spec, plan, world)
