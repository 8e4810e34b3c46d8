"""Tensor objects of arbitrary order over an algebraic structure.

Storage is either a dense row-major array (last index fastest) or a
coordinate list of (linearized index, value) pairs kept free of additive
identities: writing the identity deletes the entry, so the nonzero count
stays meaningful for cost modeling.  Symmetry attributes are metadata
plus write-time validation and mirrored reads; the backing storage is
never packed.  Reads and writes are bulk operations on index-value pairs.

Order-2 sparse tensors round-trip through Matrix Market coordinate files
(1-based on the wire); higher-order sparse tensors use a plain text
format with an ``order d1 d2 ... nnz`` header line.
"""

from __future__ import annotations

import enum
import itertools
import math
from typing import Any, Callable, Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .algebra import AlgebraicStructure

__all__ = [
    "AS",
    "IndexValuePair",
    "NS",
    "SH",
    "SY",
    "SparsityError",
    "SymmetryError",
    "Tensor",
    "TensorError",
    "matrix",
    "read_coordinate_text",
    "read_matrix_market",
    "scalar",
    "vector",
    "write_coordinate_text",
    "write_matrix_market",
]


class TensorError(ValueError):
    pass


class SymmetryError(TensorError):
    pass


class SparsityError(TensorError):
    pass


class SymmetryAttr(enum.Enum):
    """Relation of dimension i to dimension i+1.

    NS: unrelated.  SY: symmetric.  SH: symmetric with the diagonal forced
    to the additive identity.  AS: antisymmetric (mirror negated, diagonal
    forced to the identity).  The last dimension is always NS.
    """

    NS = "NS"
    SY = "SY"
    SH = "SH"
    AS = "AS"


NS = SymmetryAttr.NS
SY = SymmetryAttr.SY
SH = SymmetryAttr.SH
AS = SymmetryAttr.AS


class IndexValuePair(NamedTuple):
    index: int
    value: Any


def _symmetric_groups(dims, sym):
    """Maximal runs of equal non-NS tags; each run ties len+1 dimensions."""
    groups = []
    i = 0
    order = len(dims)
    while i < order:
        tag = sym[i]
        if tag is NS:
            i += 1
            continue
        j = i
        while j < order and sym[j] is tag:
            j += 1
        members = list(range(i, j + 1))
        for d in members:
            if dims[d] != dims[members[0]]:
                raise SymmetryError(
                    f"symmetric dimensions {members} must have equal sizes, got "
                    f"{[dims[d] for d in members]}"
                )
        groups.append((tag, members))
        i = j + 1
    return groups


class Tensor:
    """Dense or coordinate-sparse tensor over one algebraic structure.

    ``world`` optionally attaches a simulated processor grid; contraction
    expressions on such tensors are executed through the decomposition
    planner with communication accounting (see ``einsum`` and ``simgrid``).
    """

    def __init__(self, order, dims, sym=None, sparse=False, structure=None, world=None):
        dims = tuple(int(d) for d in dims)
        if order != len(dims):
            raise TensorError(f"order {order} does not match {len(dims)} dimensions")
        if any(d <= 0 for d in dims):
            raise TensorError(f"dimensions must be positive, got {dims}")
        if structure is None or not isinstance(structure, AlgebraicStructure):
            raise TensorError("a tensor requires an AlgebraicStructure")
        if sym is None:
            sym = [NS] * order
        sym = tuple(sym)
        if len(sym) != order:
            raise SymmetryError(f"{order} symmetry attributes required, got {len(sym)}")
        if order and sym[-1] is not NS:
            raise SymmetryError("the last dimension's symmetry attribute must be NS")
        for i in range(order - 1):
            a, b = sym[i], sym[i + 1]
            if a is not NS and b is not NS and a is not b:
                raise SymmetryError(f"mixed symmetry tags {a.value}/{b.value} in one run")
        groups = _symmetric_groups(dims, sym)
        if any(tag is AS for tag, _ in groups) and structure.add_inv is None:
            raise SymmetryError("AS symmetry requires a structure with an additive inverse")
        if not sparse and structure.add_id is None:
            raise TensorError("dense tensors require a structure with an additive identity")

        self.order = order
        self.dims = dims
        self.sym = sym
        self.sparse = bool(sparse)
        self.structure = structure
        self.world = world
        self.size = 1
        for d in dims:
            self.size *= d
        self._groups = groups
        self._strides = self._row_major_strides(dims)
        if self.sparse:
            self._data: dict[int, Any] = {}
            self._dense = None
        else:
            self._data = None
            self._dense = [structure.add_id] * self.size

    @staticmethod
    def _row_major_strides(dims):
        strides = [1] * len(dims)
        for i in range(len(dims) - 2, -1, -1):
            strides[i] = strides[i + 1] * dims[i + 1]
        return tuple(strides)

    # ---------------------------------------------------------------- indexing

    def linear_index(self, idx: Sequence[int]) -> int:
        if len(idx) != self.order:
            raise TensorError(f"expected {self.order} indices, got {len(idx)}")
        lin = 0
        for i, d, s in zip(idx, self.dims, self._strides):
            if not 0 <= i < d:
                raise TensorError(f"index {tuple(idx)} out of range for dims {self.dims}")
            lin += i * s
        return lin

    def tuple_index(self, lin: int) -> tuple:
        if not 0 <= lin < self.size:
            raise TensorError(f"linear index {lin} out of range for size {self.size}")
        out = []
        for s in self._strides:
            out.append(lin // s)
            lin %= s
        return tuple(out)

    def canonicalize(self, idx: Sequence[int]):
        """Return (canonical tuple, parity, forced_zero) under the symmetry.

        The canonical representative sorts every symmetric group ascending;
        parity is the sign of that sort for AS groups; forced_zero marks
        SH/AS positions with repeated indices inside a group.
        """
        idx = list(idx)
        parity = 1
        forced = False
        for tag, members in self._groups:
            vals = [idx[d] for d in members]
            if tag in (SH, AS) and len(set(vals)) < len(vals):
                forced = True
            if tag is AS:
                swaps = 0
                for a in range(len(vals)):
                    for b in range(a + 1, len(vals)):
                        if vals[a] > vals[b]:
                            swaps += 1
                if swaps % 2:
                    parity = -parity
            vals.sort()
            for d, v in zip(members, vals):
                idx[d] = v
        return tuple(idx), parity, forced

    def is_canonical(self, idx: Sequence[int]) -> bool:
        canon, _, _ = self.canonicalize(idx)
        return tuple(idx) == canon

    def canonical_positions(self) -> Iterator[tuple]:
        """All canonical, non-forced index tuples in ascending linear order."""
        for idx in itertools.product(*(range(d) for d in self.dims)):
            canon, _, forced = self.canonicalize(idx)
            if forced or canon != idx:
                continue
            yield idx

    # ---------------------------------------------------------------- access

    def _stored(self, lin: int) -> Any:
        if self.sparse:
            return self._data.get(lin, self.structure.add_id)
        return self._dense[lin]

    def get(self, *idx) -> Any:
        """Logical value at an index tuple, mirroring symmetric images."""
        if len(idx) == 1 and isinstance(idx[0], (tuple, list)):
            idx = tuple(idx[0])
        canon, parity, forced = self.canonicalize(idx)
        if forced:
            return self.structure.add_id
        val = self._stored(self.linear_index(canon))
        if parity < 0:
            if val == self.structure.add_id:
                return val
            return self.structure.add_inv(val)
        return val

    def read(self, indices: Sequence[int]) -> list:
        """Bulk read of linearized global indices."""
        out = []
        for lin in indices:
            if not 0 <= lin < self.size:
                raise TensorError(f"read index {lin} out of range")
            out.append(self.get(self.tuple_index(lin)))
        return out

    def write(self, pairs: Iterable, accumulate: bool = False) -> None:
        """Bulk write of (linearized index, value) pairs.

        Symmetric tensors accept canonical index order only; writes to an
        SH/AS forced-zero diagonal are rejected.  With ``accumulate`` the
        incoming value is combined into the stored one with the additive
        operator.  Sparse storage drops entries equal to the additive
        identity.
        """
        s = self.structure
        if accumulate and not s.has_add:
            raise TensorError("accumulating writes require an additive operator")
        for pair in pairs:
            lin, value = pair
            if not 0 <= lin < self.size:
                raise TensorError(f"write index {lin} out of range for size {self.size}")
            idx = self.tuple_index(lin)
            canon, _, forced = self.canonicalize(idx)
            if forced:
                raise SymmetryError(f"index {idx} lies on a forced-zero diagonal")
            if canon != idx:
                raise SymmetryError(f"index {idx} is not canonical (expected {canon})")
            if accumulate:
                value = s.add_op(self._stored(lin), value)
            self._set_stored(lin, value)

    def _set_stored(self, lin: int, value: Any) -> None:
        if self.sparse:
            if value == self.structure.add_id:
                self._data.pop(lin, None)
            else:
                self._data[lin] = value
        else:
            self._dense[lin] = value

    # ------------------------------------------------------------- iteration

    @property
    def nnz(self) -> int:
        if self.sparse:
            return len(self._data)
        return sum(1 for v in self._dense if v != self.structure.add_id)

    def stored_items(self) -> list[tuple[int, Any]]:
        """Stored (linear index, value) pairs in ascending index order."""
        if self.sparse:
            return sorted(self._data.items())
        add_id = self.structure.add_id
        return [(i, v) for i, v in enumerate(self._dense) if v != add_id]

    def logical_nonzeros(self) -> Iterator[tuple[tuple, Any]]:
        """All logically non-identity (tuple index, value) entries.

        Symmetric mirrors are expanded: every image of a stored canonical
        entry is yielded, with the additive inverse applied for odd AS
        permutations.
        """
        s = self.structure
        if not self._groups:
            for lin, val in self.stored_items():
                yield self.tuple_index(lin), val
            return
        for lin, val in self.stored_items():
            canon = self.tuple_index(lin)
            seen = set()
            for image, parity in self._symmetry_images(canon):
                if image in seen:
                    continue
                seen.add(image)
                if parity < 0:
                    yield image, s.add_inv(val)
                else:
                    yield image, val

    def _symmetry_images(self, idx: tuple):
        """All permuted images of a canonical tuple with their AS parity."""
        variants = [(list(idx), 1)]
        for tag, members in self._groups:
            vals = [idx[d] for d in members]
            expanded = []
            for base, parity in variants:
                for perm in itertools.permutations(range(len(members))):
                    cand = list(base)
                    for slot, src in zip(members, perm):
                        cand[slot] = vals[src]
                    p = parity
                    if tag is AS:
                        swaps = sum(
                            1
                            for a in range(len(perm))
                            for b in range(a + 1, len(perm))
                            if perm[a] > perm[b]
                        )
                        if swaps % 2:
                            p = -p
                    expanded.append((cand, p))
            variants = expanded
        return [(tuple(v), p) for v, p in variants]

    # ------------------------------------------------------------- mutation

    def sparsify(self, keep: Callable[[Any], bool]) -> None:
        """Drop stored entries whose value fails the predicate."""
        if not self.sparse:
            raise SparsityError("sparsify applies to sparse tensors only")
        self._data = {lin: v for lin, v in self._data.items() if keep(v)}

    def fill_random(self, density: float, seed: int, value_sampler=None) -> None:
        """Populate canonical positions independently with given probability.

        Each canonical position receives a value from ``value_sampler(rng)``
        with probability ``density``; existing content is discarded.  Dense
        tensors require density 1.  Deterministic for a fixed seed.
        """
        if not 0.0 < density <= 1.0:
            raise TensorError(f"density must lie in (0, 1], got {density}")
        if not self.sparse and density < 1.0:
            raise SparsityError("dense tensors can only be filled at density 1")
        rng = np.random.default_rng(seed)
        if value_sampler is None:
            value_sampler = self._default_sampler()
        if self.sparse:
            self._data = {}
        else:
            self._dense = [self.structure.add_id] * self.size
        if not self._groups:
            self._fill_random_flat(rng, density, value_sampler)
            return
        for idx in self.canonical_positions():
            if density < 1.0 and rng.random() >= density:
                continue
            self._set_stored(self.linear_index(idx), value_sampler(rng))

    def _fill_random_flat(self, rng, density, value_sampler):
        if density < 1.0:
            picks = np.flatnonzero(rng.random(self.size) < density)
        else:
            picks = np.arange(self.size)
        for lin in picks:
            self._set_stored(int(lin), value_sampler(rng))

    def _default_sampler(self):
        hint = self.structure.kernel_hint
        if hint == "real":
            return lambda rng: float(rng.uniform(0.0, 1.0))
        if hint == "tropical":
            return lambda rng: int(rng.integers(1, 100))
        raise TensorError("fill_random needs an explicit value_sampler for this structure")

    def clear(self) -> None:
        if self.sparse:
            self._data = {}
        else:
            self._dense = [self.structure.add_id] * self.size

    def copy(self) -> "Tensor":
        t = Tensor(self.order, self.dims, self.sym, self.sparse, self.structure, self.world)
        if self.sparse:
            t._data = dict(self._data)
        else:
            t._dense = list(self._dense)
        return t

    def with_sparsity(self, sparse: bool) -> "Tensor":
        """Same logical content in the other storage scheme."""
        t = Tensor(self.order, self.dims, self.sym, sparse, self.structure, self.world)
        for lin, val in self.stored_items():
            t._set_stored(lin, val)
        return t

    # ----------------------------------------------------------------- norms

    def _abs(self):
        if self.structure.abs_value is None:
            raise TensorError("structure has no absolute-value map")
        return self.structure.abs_value

    def norm1(self) -> float:
        a = self._abs()
        return float(sum(a(v) for _, v in self.logical_nonzeros()))

    def norm2(self) -> float:
        a = self._abs()
        return math.sqrt(sum(a(v) ** 2 for _, v in self.logical_nonzeros()))

    # ----------------------------------------------------------------- sugar

    def __getitem__(self, indices: str):
        from .einsum import IndexedTensor

        return IndexedTensor(self, indices)

    def __setitem__(self, indices: str, value) -> None:
        from .einsum import assign_indexed

        assign_indexed(self, indices, value)

    def item(self) -> Any:
        if self.order != 0:
            raise TensorError("item() applies to order-0 tensors")
        return self._stored(0)

    def __repr__(self):
        kind = "sparse" if self.sparse else "dense"
        return (
            f"Tensor(order={self.order}, dims={self.dims}, {kind}, "
            f"structure={self.structure.name or self.structure.kind}, nnz={self.nnz})"
        )


def scalar(structure, world=None) -> Tensor:
    return Tensor(0, (), (), False, structure, world)


def vector(n, sparse=False, structure=None, world=None) -> Tensor:
    return Tensor(1, (n,), None, sparse, structure, world)


def matrix(n, m=None, sym=None, sparse=False, structure=None, world=None) -> Tensor:
    m = n if m is None else m
    attrs = (sym, NS) if sym is not None else None
    return Tensor(2, (n, m), attrs, sparse, structure, world)


# -------------------------------------------------------------------- file IO


def write_matrix_market(t: Tensor, path) -> None:
    """Write an order-2 sparse tensor as Matrix Market coordinate data."""
    if t.order != 2 or not t.sparse:
        raise TensorError("Matrix Market output requires an order-2 sparse tensor")
    field = "integer" if t.structure.kernel_hint == "tropical" else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} general\n")
        fh.write(f"{t.dims[0]} {t.dims[1]} {t.nnz}\n")
        for lin, val in t.stored_items():
            i, j = t.tuple_index(lin)
            fh.write(f"{i + 1} {j + 1} {val}\n")


def read_matrix_market(path, structure, world=None) -> Tensor:
    """Read Matrix Market coordinate data into an order-2 sparse tensor."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket matrix coordinate"):
            raise TensorError(f"unsupported Matrix Market header: {header.strip()!r}")
        integer = "integer" in header
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        rows, cols, nnz = (int(x) for x in line.split())
        t = Tensor(2, (rows, cols), None, True, structure, world)
        pairs = []
        for _ in range(nnz):
            i, j, raw = fh.readline().split()
            val = int(raw) if integer else float(raw)
            pairs.append((t.linear_index((int(i) - 1, int(j) - 1)), val))
        t.write(pairs)
    return t


def write_coordinate_text(t: Tensor, path) -> None:
    """Write a sparse tensor of any order as plain coordinate text.

    Header line: ``order d1 d2 ... nnz``; one ``i1 i2 ... value`` line per
    stored entry, zero-based.
    """
    if not t.sparse:
        raise TensorError("coordinate text output requires a sparse tensor")
    with open(path, "w") as fh:
        dims = " ".join(str(d) for d in t.dims)
        fh.write(f"{t.order} {dims} {t.nnz}\n".replace("  ", " "))
        for lin, val in t.stored_items():
            coords = " ".join(str(i) for i in t.tuple_index(lin))
            fh.write(f"{coords} {val}\n" if coords else f"{val}\n")


def read_coordinate_text(path, structure, world=None, parse_value=None) -> Tensor:
    """Read the plain coordinate text format written by write_coordinate_text."""
    if parse_value is None:
        parse_value = int if structure.kernel_hint == "tropical" else float
    with open(path) as fh:
        head = fh.readline().split()
        order = int(head[0])
        dims = tuple(int(x) for x in head[1 : 1 + order])
        nnz = int(head[1 + order])
        t = Tensor(order, dims, None, True, structure, world)
        pairs = []
        for _ in range(nnz):
            parts = fh.readline().split()
            idx = tuple(int(x) for x in parts[:order])
            pairs.append((t.linear_index(idx), parse_value(parts[order])))
        t.write(pairs)
    return t
