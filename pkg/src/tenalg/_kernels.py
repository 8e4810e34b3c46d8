"""Local matrix-multiply kernels for folded contractions.

Every contraction core is reduced to C = A * B with A in coordinate form
and B dense.  The reference kernel walks A's sorted coordinates and applies
the structure's scalar operators directly, skipping additive identities on
either side (annihilation), so sparse and dense operands with the same
logical content produce identical results.  Recognized structures (real
ring, integer min-plus, weight/hop paths) dispatch to vectorized kernels
that compute the same values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .algebra import AlgebraicStructure, PathElement

# Chunk bound for vectorized expansion of (entries x N) temporaries.
_CHUNK_ELEMS = 1 << 22

# Sentinel larger than any candidate min-plus sum at sane scales; masked
# contributions must lose against the stored additive identity.
_TROPICAL_SENTINEL = np.int64(2**62)


@dataclass
class CooMatrix:
    """Left operand in coordinate form, sorted by (row, col).

    ``vals`` is a float/int ndarray for the vector kernels, a (w, h) pair
    of int64 ndarrays for path elements, or a plain list for the generic
    kernel.  ``dense_origin`` marks operands whose storage is dense, which
    changes how transferred words are counted (full blocks, not nonzeros).
    """

    kind: str
    nrows: int
    ncols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: Any
    dense_origin: bool = False

    @property
    def nnz(self) -> int:
        return int(self.rows.shape[0])

    def block(self, row_res: int, row_q: int, col_res: int, col_q: int) -> "CooMatrix":
        """Entries in the cyclic residue block, reindexed to local coords."""
        mask = (self.rows % row_q == row_res) & (self.cols % col_q == col_res)
        rows = self.rows[mask] // row_q
        cols = self.cols[mask] // col_q
        if self.kind == "path":
            vals = (self.vals[0][mask], self.vals[1][mask])
        elif self.kind == "generic":
            vals = [self.vals[i] for i in np.flatnonzero(mask)]
        else:
            vals = self.vals[mask]
        return CooMatrix(
            kind=self.kind,
            nrows=_cyclic_extent(self.nrows, row_res, row_q),
            ncols=_cyclic_extent(self.ncols, col_res, col_q),
            rows=rows,
            cols=cols,
            vals=vals,
            dense_origin=self.dense_origin,
        )

    def words(self) -> int:
        """Transferred words: cells for dense storage, nonzeros otherwise."""
        if self.dense_origin:
            return self.nrows * self.ncols
        return self.nnz


@dataclass
class DenseMatrix:
    """Right operand, dense row-major.

    ``data`` is a 2D ndarray, a (w, h) pair of 2D int64 ndarrays for path
    elements, or a flat list for the generic kernel.
    """

    kind: str
    nrows: int
    ncols: int
    data: Any

    def block(self, row_res: int, row_q: int, col_res: int, col_q: int) -> "DenseMatrix":
        nrows = _cyclic_extent(self.nrows, row_res, row_q)
        ncols = _cyclic_extent(self.ncols, col_res, col_q)
        if self.kind == "path":
            data = (
                self.data[0][row_res::row_q, col_res::col_q],
                self.data[1][row_res::row_q, col_res::col_q],
            )
        elif self.kind == "generic":
            data = [
                self.data[r * self.ncols + c]
                for r in range(row_res, self.nrows, row_q)
                for c in range(col_res, self.ncols, col_q)
            ]
        else:
            data = self.data[row_res::row_q, col_res::col_q]
        return DenseMatrix(kind=self.kind, nrows=nrows, ncols=ncols, data=data)

    def words(self) -> int:
        return self.nrows * self.ncols


def _cyclic_extent(n: int, residue: int, q: int) -> int:
    """Number of values below n congruent to residue mod q."""
    if residue >= n:
        return 0
    return (n - residue + q - 1) // q


def kernel_kind(structure: AlgebraicStructure) -> str:
    hint = structure.kernel_hint
    if hint in ("real", "tropical", "path"):
        return hint
    return "generic"


def pack_values(kind: str, values: list):
    """Convert a value list to the kernel representation for ``kind``."""
    if kind == "real":
        return np.asarray(values, dtype=np.float64)
    if kind == "tropical":
        return np.asarray(values, dtype=np.int64)
    if kind == "path":
        w = np.fromiter((p.w for p in values), dtype=np.int64, count=len(values))
        h = np.fromiter((p.h for p in values), dtype=np.int64, count=len(values))
        return (w, h)
    return values


def pack_dense(kind: str, flat: list, nrows: int, ncols: int):
    if kind == "path":
        w, h = pack_values(kind, flat)
        return (w.reshape(nrows, ncols), h.reshape(nrows, ncols))
    if kind == "generic":
        return flat
    return pack_values(kind, flat).reshape(nrows, ncols)


def matmul(structure: AlgebraicStructure, A: CooMatrix, B: DenseMatrix) -> list:
    """C = A * B under the structure's operators; returns a flat value list."""
    if A.ncols != B.nrows:
        raise ValueError(f"inner dimensions differ: {A.ncols} vs {B.nrows}")
    M, N = A.nrows, B.ncols
    if M == 0 or N == 0:
        return []
    if A.kind == "real":
        return _matmul_real(structure, A, B)
    if A.kind == "tropical":
        return _matmul_tropical(structure, A, B)
    if A.kind == "path":
        return _matmul_path(structure, A, B)
    return _matmul_generic(structure, A, B)


def _matmul_generic(structure, A: CooMatrix, B: DenseMatrix) -> list:
    add, mul = structure.add_op, structure.mul_op
    add_id = structure.add_id
    N = B.ncols
    bdata = B.data
    C = [add_id] * (A.nrows * N)
    rows = A.rows.tolist()
    cols = A.cols.tolist()
    for m, k, v in zip(rows, cols, A.vals):
        bbase = k * N
        cbase = m * N
        for n in range(N):
            b = bdata[bbase + n]
            if b == add_id:
                continue
            C[cbase + n] = add(C[cbase + n], mul(v, b))
    return C


def _matmul_real(structure, A: CooMatrix, B: DenseMatrix) -> list:
    M, K, N = A.nrows, A.ncols, B.ncols
    Bm = B.data
    if A.dense_origin and A.nnz > 0.25 * M * K:
        Am = np.zeros((M, K), dtype=np.float64)
        Am[A.rows, A.cols] = A.vals
        return (Am @ Bm).ravel().tolist()
    C = np.zeros((M, N), dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(N, 1))
    for lo in range(0, A.nnz, step):
        hi = min(lo + step, A.nnz)
        contrib = A.vals[lo:hi, None] * Bm[A.cols[lo:hi]]
        np.add.at(C, A.rows[lo:hi], contrib)
    return C.ravel().tolist()


def _matmul_tropical(structure, A: CooMatrix, B: DenseMatrix) -> list:
    add_id = np.int64(structure.add_id)
    M, N = A.nrows, B.ncols
    Bm = B.data
    C = np.full((M, N), add_id, dtype=np.int64)
    if A.nnz == 0:
        return C.ravel().tolist()
    # Entries are sorted by (row, col): rows form contiguous segments, so a
    # segmented min over the candidate sums yields whole rows at once.
    # Chunks split at row boundaries to bound the expanded temporary.
    urows, starts = np.unique(A.rows, return_index=True)
    bounds = np.append(starts, A.nnz)
    max_entries = max(1, _CHUNK_ELEMS // max(N, 1))
    nrows_seg = len(urows)
    lo = 0
    while lo < nrows_seg:
        hi = lo + 1
        while hi < nrows_seg and bounds[hi + 1] - bounds[lo] <= max_entries:
            hi += 1
        e_lo, e_hi = bounds[lo], bounds[hi]
        bk = Bm[A.cols[e_lo:e_hi]]
        cand = A.vals[e_lo:e_hi, None] + bk
        cand[bk == add_id] = _TROPICAL_SENTINEL
        seg = np.minimum.reduceat(cand, starts[lo:hi] - e_lo, axis=0)
        idx = urows[lo:hi]
        C[idx] = np.minimum(C[idx], seg)
        lo = hi
    return C.ravel().tolist()


def _matmul_path(structure, A: CooMatrix, B: DenseMatrix) -> list:
    inf_w = np.int64(structure.add_id.w)
    M, N = A.nrows, B.ncols
    Bw, Bh = B.data
    Cw = np.full((M, N), inf_w, dtype=np.int64)
    Ch = np.zeros((M, N), dtype=np.int64)
    vw, vh = A.vals
    rows = A.rows
    # Row-sequential with the column axis vectorized; within a row the
    # candidates are visited in ascending k so that on weight ties the
    # later contribution wins, matching the scalar addition operator.
    if A.nnz:
        urows, starts = np.unique(rows, return_index=True)
        bounds = np.append(starts, A.nnz)
        for ri, m in enumerate(urows):
            for e in range(bounds[ri], bounds[ri + 1]):
                k = A.cols[e]
                bw = Bw[k]
                cw = vw[e] + bw
                upd = (bw != inf_w) & (cw <= Cw[m])
                if upd.any():
                    Cw[m][upd] = cw[upd]
                    Ch[m][upd] = vh[e] + Bh[k][upd]
    out = []
    flat_w = Cw.ravel()
    flat_h = Ch.ravel()
    for i in range(M * N):
        out.append(PathElement(int(flat_w[i]), int(flat_h[i])))
    return out


def merge_partials(structure: AlgebraicStructure, acc: list, part: list) -> list:
    """Elementwise combine of two partial result blocks with the additive op."""
    add = structure.add_op
    add_id = structure.add_id
    out = []
    for a, b in zip(acc, part):
        if a == add_id:
            out.append(b)
        elif b == add_id:
            out.append(a)
        else:
            out.append(add(a, b))
    return out
