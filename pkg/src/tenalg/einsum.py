"""Indexed tensor expressions and their execution engines.

An expression names each tensor's ways with index characters; characters
absent from the output are folded away through the output structure's
addition, characters only in the output replicate the result, characters
in all three tensors select independent problems, and repeated characters
within one tensor walk its diagonal.  The meaning of every expression is
the nested loop nest over all unique characters with the elementwise
operation innermost; ``execute_reference`` runs exactly those loops and is
the oracle every optimized path must match.

The production path stages an expression into (diagonal extraction) +
(independent pre-summation) + (a matrix-multiply core) + (replication into
mapped output indices), then runs the core either locally or as a replayed
block schedule on a virtual processor grid with communication accounting.
Expressions whose output tensor carries a virtual world are planned and
replayed automatically.

Sparse operands contribute only their stored entries; dense operands skip
values equal to the additive identity when combined through the structure's
operators (annihilation), so storage scheme never changes results.  With
an explicit element function, dense operands are evaluated at every
position while sparse operands still mean "no entry here".
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from . import _kernels
from .algebra import AlgebraicStructure, ElementFunction, ElementTransform
from .tensor import NS, Tensor, TensorError

__all__ = [
    "ExpressionError",
    "ExpressionSpec",
    "IndexRole",
    "IndexedTensor",
    "PlanError",
    "apply_function",
    "apply_transform",
    "classify_indices",
    "execute",
    "execute_planned",
    "execute_reference",
]


class ExpressionError(ValueError):
    pass


class PlanError(ValueError):
    pass


_EXECUTED = object()  # marker returned by in-place operators, absorbed by __setitem__


# ---------------------------------------------------------------------- sugar


class IndexedTensor:
    """A tensor with one character naming each of its ways."""

    __slots__ = ("tensor", "indices")

    def __init__(self, tensor: Tensor, indices: str):
        if len(indices) != tensor.order:
            raise ExpressionError(
                f"{tensor.order} index characters required, got {indices!r}"
            )
        seen = {}
        for c, d in zip(indices, tensor.dims):
            if seen.setdefault(c, d) != d:
                raise ExpressionError(
                    f"repeated index {c!r} spans unequal dimensions in {indices!r}"
                )
        self.tensor = tensor
        self.indices = indices

    def __mul__(self, other):
        if isinstance(other, IndexedTensor):
            return Expression(operands=(self, other))
        if isinstance(other, Expression):
            return other.__rmul__(self)
        return Expression(operands=(self,), coefficient=other)

    def __rmul__(self, scalar):
        return Expression(operands=(self,), coefficient=scalar)

    def __neg__(self):
        return Expression(operands=(self,), negated=True)

    def __iadd__(self, rhs):
        _run_assignment(self, rhs, accumulate=True)
        return _EXECUTED

    def __isub__(self, rhs):
        _run_assignment(self, rhs, accumulate=True, negate=True)
        return _EXECUTED

    def __imul__(self, rhs):
        if isinstance(rhs, IndexedTensor):
            spec = ExpressionSpec(
                output=self, operands=(self, rhs), coefficient=None,
                func=None, accumulate=False,
            )
            execute(spec)
        else:
            _scalar_update(self, rhs, mode="mul")
        return _EXECUTED

    def item(self):
        """Full reduction of this indexed view into a scalar."""
        return Expression(operands=(self,)).item()

    def __repr__(self):
        return f"{self.tensor!r}[{self.indices!r}]"


@dataclass
class Expression:
    """One product term: up to two indexed operands, a coefficient, or a function."""

    operands: tuple
    coefficient: Any = None
    negated: bool = False
    func: Optional[ElementFunction] = None

    def __mul__(self, other):
        if isinstance(other, IndexedTensor):
            if len(self.operands) >= 2:
                raise ExpressionError("expressions take at most two tensor operands")
            return replace(self, operands=self.operands + (other,))
        return self._scale(other)

    def __rmul__(self, other):
        if isinstance(other, IndexedTensor):
            if len(self.operands) >= 2:
                raise ExpressionError("expressions take at most two tensor operands")
            return replace(self, operands=(other,) + self.operands)
        return self._scale(other)

    def _scale(self, scalar):
        if self.coefficient is not None:
            raise ExpressionError("expression already carries a coefficient")
        return replace(self, coefficient=scalar)

    def __neg__(self):
        return replace(self, negated=not self.negated)

    def final_coefficient(self, structure: AlgebraicStructure):
        c = self.coefficient
        if self.negated:
            if structure.add_inv is None:
                raise ExpressionError("negation requires a structure with additive inverses")
            c = structure.add_inv(c if c is not None else structure.mul_id)
        return c

    def item(self):
        """Execute into a fresh order-0 tensor and return the element."""
        structure = self.operands[0].tensor.structure
        out = Tensor(0, (), (), False, structure)
        spec = ExpressionSpec(
            output=IndexedTensor(out, ""),
            operands=self.operands,
            coefficient=self.final_coefficient(structure),
            func=self.func,
            accumulate=False,
        )
        execute(spec)
        return out.item()


def function_expression(func: ElementFunction, operands) -> Expression:
    operands = tuple(operands)
    if len(operands) != func.arity:
        raise ExpressionError(
            f"function of arity {func.arity} applied to {len(operands)} operands"
        )
    if not all(isinstance(o, IndexedTensor) for o in operands):
        raise ExpressionError("functions apply to indexed tensors")
    return Expression(operands=operands, func=func)


def assign_indexed(tensor: Tensor, indices: str, value) -> None:
    """Implements ``T[chars] = value`` for expressions, views and scalars."""
    if value is _EXECUTED:
        return
    target = IndexedTensor(tensor, indices)
    if isinstance(value, (Expression, IndexedTensor)):
        _run_assignment(target, value, accumulate=False)
    else:
        _scalar_update(target, value, mode="assign")


def _run_assignment(target: IndexedTensor, rhs, accumulate: bool, negate: bool = False):
    if isinstance(rhs, IndexedTensor):
        rhs = Expression(operands=(rhs,))
    if not isinstance(rhs, Expression):
        if accumulate:
            _scalar_update(target, rhs, mode="add")
            return
        raise ExpressionError(f"cannot assign {type(rhs).__name__} to an indexed tensor")
    if negate:
        rhs = -rhs
    if rhs.func is not None and rhs.negated:
        raise ExpressionError("function applications cannot be negated; fold the "
                              "sign into the function body")
    structure = target.tensor.structure
    spec = ExpressionSpec(
        output=target,
        operands=rhs.operands,
        coefficient=rhs.final_coefficient(structure) if rhs.func is None
        else rhs.coefficient,
        func=rhs.func,
        accumulate=accumulate,
    )
    execute(spec)


def _scalar_update(target: IndexedTensor, value, mode: str) -> None:
    """Fill / accumulate / scale the addressed (possibly diagonal) pattern."""
    t = target.tensor
    if any(tag is not NS for tag in t.sym):
        raise ExpressionError("scalar pattern updates require a nonsymmetric tensor")
    s = t.structure
    chars = _unique_chars(target.indices)
    sizes = [t.dims[target.indices.index(c)] for c in chars]
    if mode == "mul" and s.mul_op is None:
        raise ExpressionError("scaling requires a multiplicative operator")
    if mode == "add" and s.add_op is None:
        raise ExpressionError("accumulation requires an additive operator")
    for assign in itertools.product(*(range(n) for n in sizes)):
        env = dict(zip(chars, assign))
        lin = t.linear_index(tuple(env[c] for c in target.indices))
        if mode == "assign":
            t._set_stored(lin, value)
        elif mode == "add":
            t._set_stored(lin, s.add_op(t._stored(lin), value))
        else:
            cur = t._stored(lin)
            if cur == s.add_id:
                continue
            t._set_stored(lin, s.mul_op(value, cur))


# ------------------------------------------------------------- specification


@dataclass
class ExpressionSpec:
    """Normalized expression: output view, 1-2 operand views, options."""

    output: IndexedTensor
    operands: tuple
    coefficient: Any = None
    func: Optional[ElementFunction] = None
    accumulate: bool = False

    def __post_init__(self):
        if not 1 <= len(self.operands) <= 2:
            raise ExpressionError("expressions take one or two tensor operands")


@dataclass(frozen=True)
class IndexRole:
    """Occurrence class of one index character across the three tensors."""

    kind: str  # contracted | summed | mapped | batch | external
    diagonal: bool = False


def _unique_chars(s: str) -> str:
    out = []
    for c in s:
        if c not in out:
            out.append(c)
    return "".join(out)


def _char_sizes(spec: ExpressionSpec) -> dict:
    sizes: dict[str, int] = {}
    views = (spec.output,) + tuple(spec.operands)
    for view in views:
        for c, d in zip(view.indices, view.tensor.dims):
            if sizes.setdefault(c, d) != d:
                raise ExpressionError(
                    f"index {c!r} spans unequal dimensions ({sizes[c]} vs {d})"
                )
    return sizes


def _compatible(a: AlgebraicStructure, b: AlgebraicStructure) -> bool:
    return a is b or (a.name != "" and a.name == b.name and a.kind == b.kind)


def _validate_spec(spec: ExpressionSpec) -> dict:
    sizes = _char_sizes(spec)
    out_t = spec.output.tensor
    if any(tag is not NS for tag in out_t.sym):
        raise ExpressionError("expression outputs must be nonsymmetric")
    if spec.func is not None:
        if spec.func.arity != len(spec.operands):
            raise ExpressionError(
                f"function arity {spec.func.arity} does not match "
                f"{len(spec.operands)} operands"
            )
        if not spec.func.distributive:
            raise ExpressionError(
                "non-distributive functions are not supported; the implied "
                "summation would not commute with the loop nest"
            )
    else:
        for op in spec.operands:
            if not _compatible(op.tensor.structure, out_t.structure):
                raise ExpressionError(
                    "operator expressions require operands on the output's structure; "
                    "use an element function to mix element types"
                )
        if len(spec.operands) == 2 and out_t.structure.mul_op is None:
            raise ExpressionError("two-operand products require a multiplicative operator")
        if not out_t.structure.has_add:
            raise ExpressionError("expressions require an additive operator on the output")
    if spec.coefficient is not None and out_t.structure.mul_op is None:
        raise ExpressionError("coefficients require a multiplicative operator")
    return sizes


def classify_indices(spec: ExpressionSpec) -> dict:
    """Role of every unique character, a pure function of occurrence sets."""
    _char_sizes(spec)
    occ_out = set(spec.output.indices)
    occ_ops = [set(op.indices) for op in spec.operands]
    diag = set()
    for view in (spec.output,) + tuple(spec.operands):
        for c in view.indices:
            if view.indices.count(c) > 1:
                diag.add(c)
    roles = {}
    all_chars = _unique_chars(
        spec.output.indices + "".join(op.indices for op in spec.operands)
    )
    for c in all_chars:
        n_ops = sum(c in o for o in occ_ops)
        if c in occ_out:
            if n_ops == 0:
                kind = "mapped"
            elif n_ops == 1:
                kind = "external"
            else:
                kind = "batch"
        else:
            kind = "contracted" if n_ops == 2 else "summed"
        roles[c] = IndexRole(kind=kind, diagonal=c in diag)
    return roles


# ---------------------------------------------------------------- reference


def execute_reference(spec: ExpressionSpec) -> None:
    """Literal nested-loop execution; the oracle for every optimized path."""
    sizes = _validate_spec(spec)
    out = spec.output
    out_t = out.tensor
    s_out = out_t.structure
    operands = _snapshot_aliases(spec)
    coeff = spec.coefficient
    func = spec.func

    if not spec.accumulate:
        _reset_affected(out, sizes)

    chars = _unique_chars(out.indices + "".join(op.indices for op in operands))
    ranges = [range(sizes[c]) for c in chars]
    add = s_out.add_op
    mul = s_out.mul_op
    out_positions = [chars.index(c) for c in out.indices]

    for assign in itertools.product(*ranges):
        vals = []
        skip = False
        for op in operands:
            idx = tuple(assign[chars.index(c)] for c in op.indices)
            v = op.tensor.get(idx)
            if v == op.tensor.structure.add_id and (func is None or op.tensor.sparse):
                skip = True
                break
            vals.append(v)
        if skip:
            continue
        if func is not None:
            term = func.body(*vals)
        elif len(vals) == 2:
            term = mul(vals[0], vals[1])
        else:
            term = vals[0]
        if coeff is not None:
            term = mul(coeff, term)
        lin = out_t.linear_index(tuple(assign[p] for p in out_positions))
        out_t._set_stored(lin, add(out_t._stored(lin), term))


def _snapshot_aliases(spec: ExpressionSpec):
    """Copy operands that alias the output so reads see pre-update values."""
    out_t = spec.output.tensor
    cache = {}
    ops = []
    for op in spec.operands:
        if op.tensor is out_t:
            if id(op.tensor) not in cache:
                cache[id(op.tensor)] = op.tensor.copy()
            ops.append(IndexedTensor(cache[id(op.tensor)], op.indices))
        else:
            ops.append(op)
    return ops


def _reset_affected(out: IndexedTensor, sizes: dict) -> None:
    """Set every output position addressed by the index pattern to the identity."""
    t = out.tensor
    add_id = t.structure.add_id
    chars = _unique_chars(out.indices)
    for assign in itertools.product(*(range(sizes[c]) for c in chars)):
        env = dict(zip(chars, assign))
        t._set_stored(t.linear_index(tuple(env[c] for c in out.indices)), add_id)


# ------------------------------------------------------------- staged engine


@dataclass
class _Staged:
    """Expression after diagonal extraction and independent pre-summation."""

    spec: ExpressionSpec
    sizes: dict
    a: IndexedTensor
    b: Optional[IndexedTensor]
    swapped: bool
    batch_chars: str
    m_chars: str
    n_chars: str
    k_chars: str
    mapped_chars: str

    def extent(self, chars: str) -> int:
        e = 1
        for c in chars:
            e *= self.sizes[c]
        return e


def _preprocess(spec: ExpressionSpec) -> _Staged:
    sizes = _validate_spec(spec)
    ops = _snapshot_aliases(spec)
    ops = [_resolve_diagonal(op) for op in ops]

    out_chars = set(spec.output.indices)
    op_chars = [set(op.indices) for op in ops]
    reduced = []
    for i, op in enumerate(ops):
        other = op_chars[1 - i] if len(ops) == 2 else set()
        summed = [c for c in op.indices if c not in out_chars and c not in other]
        reduced.append(_reduce_summed(op, summed) if summed else op)
    ops = reduced
    op_chars = [set(op.indices) for op in ops]

    swapped = False
    if len(ops) == 2:
        if ops[0].tensor.sparse and ops[1].tensor.sparse:
            raise PlanError(
                "contraction of two sparse operands is not supported; "
                "store one operand densely"
            )
        if ops[1].tensor.sparse and not ops[0].tensor.sparse:
            ops = [ops[1], ops[0]]
            op_chars = [op_chars[1], op_chars[0]]
            swapped = True

    a, b = ops[0], (ops[1] if len(ops) == 2 else None)
    a_set, b_set = op_chars[0], (op_chars[1] if len(ops) == 2 else set())
    out_list = _unique_chars(spec.output.indices)
    batch = "".join(c for c in out_list if c in a_set and c in b_set)
    m_chars = "".join(c for c in out_list if c in a_set and c not in b_set)
    n_chars = "".join(c for c in out_list if c in b_set and c not in a_set)
    mapped = "".join(c for c in out_list if c not in a_set and c not in b_set)
    k_chars = "".join(
        c for c in _unique_chars(a.indices) if c in b_set and c not in out_chars
    )
    return _Staged(
        spec=spec, sizes=sizes, a=a, b=b, swapped=swapped,
        batch_chars=batch, m_chars=m_chars, n_chars=n_chars,
        k_chars=k_chars, mapped_chars=mapped,
    )


def _resolve_diagonal(op: IndexedTensor) -> IndexedTensor:
    """Extract the addressed diagonal into a tensor with unique characters."""
    uchars = _unique_chars(op.indices)
    if len(uchars) == len(op.indices):
        return op
    t = op.tensor
    dims = tuple(t.dims[op.indices.index(c)] for c in uchars)
    new = Tensor(len(uchars), dims, None, t.sparse, t.structure)
    for idx, val in t.logical_nonzeros():
        env = {}
        ok = True
        for c, i in zip(op.indices, idx):
            if env.setdefault(c, i) != i:
                ok = False
                break
        if ok:
            new._set_stored(new.linear_index(tuple(env[c] for c in uchars)), val)
    return IndexedTensor(new, uchars)


def _reduce_summed(op: IndexedTensor, summed) -> IndexedTensor:
    """Pre-sum an operand over indices appearing nowhere else."""
    t = op.tensor
    s = t.structure
    keep = [c for c in op.indices if c not in summed]
    dims = tuple(t.dims[op.indices.index(c)] for c in keep)
    new = Tensor(len(keep), dims, None, t.sparse, s)
    add = s.add_op
    add_id = s.add_id
    acc: dict[int, Any] = {}
    for idx, val in t.logical_nonzeros():
        env = dict(zip(op.indices, idx))
        lin = new.linear_index(tuple(env[c] for c in keep))
        cur = acc.get(lin, add_id)
        acc[lin] = val if cur == add_id else add(cur, val)
    for lin, val in acc.items():
        new._set_stored(lin, val)
    return IndexedTensor(new, "".join(keep))


def _linearizer(chars: str, sizes: dict):
    """Maps a char->value environment to a linear index over ``chars``."""
    dims = [sizes[c] for c in chars]
    strides = [1] * len(dims)
    for i in range(len(dims) - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    def lin(env):
        return sum(env[c] * s for c, s in zip(chars, strides))
    return lin, dims, strides


def _fold_coo(staged: _Staged, op: IndexedTensor, row_chars: str, col_chars: str):
    """Per-batch coordinate matrices of an operand (rows x cols)."""
    kind = _kernels.kernel_kind(op.tensor.structure)
    sizes = staged.sizes
    blin, _, _ = _linearizer(staged.batch_chars, sizes)
    rlin, _, _ = _linearizer(row_chars, sizes)
    clin, _, _ = _linearizer(col_chars, sizes)
    nrows = staged.extent(row_chars)
    ncols = staged.extent(col_chars)
    per_batch: dict[int, list] = {}
    for idx, val in op.tensor.logical_nonzeros():
        env = dict(zip(op.indices, idx))
        per_batch.setdefault(blin(env), []).append((rlin(env), clin(env), val))
    folded = {}
    for b, entries in per_batch.items():
        entries.sort(key=lambda e: (e[0], e[1]))
        rows = np.fromiter((e[0] for e in entries), dtype=np.int64, count=len(entries))
        cols = np.fromiter((e[1] for e in entries), dtype=np.int64, count=len(entries))
        vals = _kernels.pack_values(kind, [e[2] for e in entries])
        folded[b] = _kernels.CooMatrix(
            kind=kind, nrows=nrows, ncols=ncols, rows=rows, cols=cols,
            vals=vals, dense_origin=not op.tensor.sparse,
        )
    empty_vals = _kernels.pack_values(kind, [])
    template = _kernels.CooMatrix(
        kind=kind, nrows=nrows, ncols=ncols,
        rows=np.empty(0, dtype=np.int64), cols=np.empty(0, dtype=np.int64),
        vals=empty_vals, dense_origin=not op.tensor.sparse,
    )
    return folded, template


def _fold_dense(staged: _Staged, op: IndexedTensor, row_chars: str, col_chars: str):
    """Per-batch dense matrices of an operand (rows x cols)."""
    t = op.tensor
    kind = _kernels.kernel_kind(t.structure)
    sizes = staged.sizes
    nrows = staged.extent(row_chars)
    ncols = staged.extent(col_chars)
    nbatch = staged.extent(staged.batch_chars)
    order = staged.batch_chars + row_chars + col_chars
    if not t.sparse and all(tag is NS for tag in t.sym):
        perm = [op.indices.index(c) for c in order]
        gather = (
            np.arange(t.size).reshape(t.dims).transpose(perm).reshape(nbatch, -1)
            if t.order
            else np.zeros((1, 1), dtype=np.int64)
        )
        dense = t._dense
        out = {}
        for b in range(nbatch):
            flat = [dense[i] for i in gather[b]]
            out[b] = _kernels.DenseMatrix(
                kind=kind, nrows=nrows, ncols=ncols,
                data=_kernels.pack_dense(kind, flat, nrows, ncols),
            )
        return out
    blin, _, _ = _linearizer(staged.batch_chars, sizes)
    out = {}
    ranges = [range(sizes[c]) for c in order]
    flat_by_batch: dict[int, list] = {}
    for assign in itertools.product(*ranges):
        env = dict(zip(order, assign))
        idx = tuple(env[c] for c in op.indices)
        flat_by_batch.setdefault(blin(env), []).append(t.get(idx))
    for b, flat in flat_by_batch.items():
        out[b] = _kernels.DenseMatrix(
            kind=kind, nrows=nrows, ncols=ncols,
            data=_kernels.pack_dense(kind, flat, nrows, ncols),
        )
    return out


# ------------------------------------------------------------------- unfold


def _unfold(staged: _Staged, core: dict) -> None:
    """Scatter per-batch core results into the output tensor."""
    spec = staged.spec
    out = spec.output
    out_t = out.tensor
    s = out_t.structure
    add, mul = s.add_op, s.mul_op
    add_id = s.add_id
    coeff = spec.coefficient
    sizes = staged.sizes

    # Groups were derived after any operand swap: rows of the core are the
    # staged first operand's external characters.
    row_chars = staged.m_chars
    col_chars = staged.n_chars
    M = staged.extent(row_chars)
    N = staged.extent(col_chars)
    nbatch = staged.extent(staged.batch_chars)

    if _vector_unfold(staged, core, row_chars, col_chars, M, N, nbatch):
        return

    if not spec.accumulate:
        _reset_affected(out, sizes)

    _, bdims, _ = _linearizer(staged.batch_chars, sizes)
    _, rdims, _ = _linearizer(row_chars, sizes)
    _, cdims, _ = _linearizer(col_chars, sizes)
    mapped_ranges = [range(sizes[c]) for c in staged.mapped_chars]

    def delin(lin, dims):
        vals = []
        for d in reversed(dims):
            vals.append(lin % d)
            lin //= d
        return tuple(reversed(vals))

    for b in range(nbatch):
        cells = core.get(b)
        if cells is None:
            continue
        benv = dict(zip(staged.batch_chars, delin(b, bdims)))
        for r in range(M):
            renv = dict(zip(row_chars, delin(r, rdims)))
            base = r * N
            for c in range(N):
                val = cells[base + c]
                if val == add_id:
                    continue
                if coeff is not None:
                    val = mul(coeff, val)
                env = dict(benv)
                env.update(renv)
                env.update(zip(col_chars, delin(c, cdims)))
                for mvals in itertools.product(*mapped_ranges):
                    env.update(zip(staged.mapped_chars, mvals))
                    lin = out_t.linear_index(tuple(env[ch] for ch in out.indices))
                    out_t._set_stored(lin, add(out_t._stored(lin), val))


def _vector_unfold(staged, core, row_chars, col_chars, M, N, nbatch) -> bool:
    """Vectorized scatter for real/tropical dense nonsymmetric outputs."""
    spec = staged.spec
    out_t = spec.output.tensor
    kind = _kernels.kernel_kind(out_t.structure)
    if kind not in ("real", "tropical"):
        return False
    if out_t.sparse or staged.mapped_chars or len(set(spec.output.indices)) != len(
        spec.output.indices
    ):
        return False
    dtype = np.float64 if kind == "real" else np.int64
    add_id = out_t.structure.add_id
    order = staged.batch_chars + row_chars + col_chars
    if set(order) != set(spec.output.indices):
        return False
    # Linear offsets of output positions as an outer sum over char groups.
    strides = {c: out_t._strides[i] for i, c in enumerate(spec.output.indices)}
    def group_offsets(chars):
        offs = np.zeros(1, dtype=np.int64)
        for c in chars:
            step = np.arange(staged.sizes[c], dtype=np.int64) * strides[c]
            offs = (offs[:, None] + step[None, :]).ravel()
        return offs
    boffs = group_offsets(staged.batch_chars)
    roffs = group_offsets(row_chars)
    coffs = group_offsets(col_chars)
    arr = np.asarray(out_t._dense, dtype=dtype)
    coeff = spec.coefficient
    sentinel = _kernels._TROPICAL_SENTINEL
    for b in range(nbatch):
        cells = core.get(b)
        if cells is None:
            vals = np.full(M * N, add_id, dtype=dtype)
        else:
            vals = np.asarray(cells, dtype=dtype)
        lin = (boffs[b] + (roffs[:, None] + coffs[None, :]).ravel())
        missing = vals == add_id
        if kind == "real":
            scaled = vals * coeff if coeff is not None else vals
            scaled = np.where(missing, 0.0, scaled)
            if spec.accumulate:
                arr[lin] += scaled
            else:
                arr[lin] = scaled
        else:
            scaled = vals + coeff if coeff is not None else vals.copy()
            scaled[missing] = sentinel if spec.accumulate else add_id
            if spec.accumulate:
                arr[lin] = np.minimum(arr[lin], scaled)
            else:
                arr[lin] = scaled
    out_t._dense = arr.tolist()
    return True


# ---------------------------------------------------------------- execution


def _run_core_local(staged: _Staged) -> dict:
    structure = staged.spec.output.tensor.structure
    row_chars = staged.m_chars
    col_chars = staged.n_chars
    if staged.b is None:
        folded, _ = _fold_coo(staged, staged.a, row_chars, staged.k_chars)
        core = {}
        M = staged.extent(row_chars)
        for b, A in folded.items():
            cells = [structure.add_id] * M
            for r, v in zip(A.rows.tolist(), _iter_values(A)):
                cells[r] = v
            core[b] = cells
        return core
    a_fold, _ = _fold_coo(staged, staged.a, row_chars, staged.k_chars)
    b_fold = _fold_dense(staged, staged.b, staged.k_chars, col_chars)
    core = {}
    for b, A in a_fold.items():
        core[b] = _kernels.matmul(structure, A, b_fold[b])
    return core


def _iter_values(A):
    if A.kind == "path":
        from .algebra import PathElement

        return [PathElement(int(w), int(h)) for w, h in zip(A.vals[0], A.vals[1])]
    if A.kind == "generic":
        return A.vals
    return A.vals.tolist()


def execute(spec: ExpressionSpec) -> None:
    """Execute an expression, routing through a virtual world when present."""
    if spec.func is not None:
        _execute_function(spec)
        return
    if len(spec.operands) == 2 and all(op.tensor.sparse for op in spec.operands):
        execute_reference(spec)
        return
    world = spec.output.tensor.world
    if world is not None and len(spec.operands) == 2:
        staged = _preprocess(spec)
        if staged.k_chars:
            from .planner import ProblemShape, choose_plan

            shape = _folded_shape(staged, world.p, getattr(world, "memory", None))
            plan = choose_plan(shape)
            _execute_staged_planned(staged, plan, world)
            return
        _unfold(staged, _run_core_local(staged))
        return
    staged = _preprocess(spec)
    _unfold(staged, _run_core_local(staged))


def _folded_shape(staged: _Staged, p: int, memory=None):
    from .planner import ProblemShape
    import math

    m = staged.extent(staged.m_chars)
    k = staged.extent(staged.k_chars)
    n = staged.extent(staged.n_chars)
    nbatch = staged.extent(staged.batch_chars)
    if staged.a.tensor.sparse:
        total = staged.a.tensor.nnz
        z = max(1, -(-total // nbatch))
    else:
        z = m * k
    z = min(z, m * k)
    mem = memory if memory is not None else math.inf
    return ProblemShape(m=m, k=k, n=n, z=z, p=p, memory=mem)


def execute_planned(spec: ExpressionSpec, plan, world):
    """Execute a contraction as a replayed block schedule on a virtual grid.

    The expression must reduce to a matrix multiplication: after diagonal
    extraction and pre-summation every remaining non-batch index appears in
    exactly two tensors.  The numerical result equals execute_reference;
    the returned report tallies words moved between virtual processes.
    """
    from . import simgrid

    if len(spec.operands) != 2:
        raise PlanError("planned execution requires a two-operand contraction")
    staged = _preprocess(spec)
    return _execute_staged_planned(staged, plan, world)


def _execute_staged_planned(staged: _Staged, plan, world):
    from . import simgrid

    p1, p2, p3 = plan.grid
    if p1 * p2 * p3 != world.p:
        raise PlanError(
            f"plan grid {plan.grid} does not match world process count {world.p}"
        )
    structure = staged.spec.output.tensor.structure
    a_fold, a_template = _fold_coo(staged, staged.a, staged.m_chars, staged.k_chars)
    b_fold = _fold_dense(staged, staged.b, staged.k_chars, staged.n_chars)
    nbatch = staged.extent(staged.batch_chars)
    tally = simgrid.ReplayTally(plan.grid)
    core = {}
    workers = int(os.environ.get("TENALG_WORKERS", "1") or "1")
    for b in range(nbatch):
        A = a_fold.get(b, a_template)
        core[b] = simgrid.replay_block_schedule(
            structure, A, b_fold[b], plan.grid, tally, workers=workers
        )
    _unfold(staged, core)
    report = tally.report(predicted_w=plan.predicted.w_layout)
    if world is not None:
        world.reports.append(report)
    return report


# ------------------------------------------------- functions and transforms


def apply_function(out: IndexedTensor, in1: IndexedTensor, in2, f: ElementFunction,
                   accumulate: bool = False) -> None:
    """Loop semantics with ``f`` in place of the multiply; sums use the
    output structure's addition."""
    operands = (in1,) if in2 is None else (in1, in2)
    spec = ExpressionSpec(output=out, operands=operands, func=f, accumulate=accumulate)
    _execute_function(spec)


def _execute_function(spec: ExpressionSpec) -> None:
    sizes = _validate_spec(spec)
    out = spec.output
    out_t = out.tensor
    s_out = out_t.structure
    operands = _snapshot_aliases(spec)
    func = spec.func
    mul = s_out.mul_op
    coeff = spec.coefficient
    add = s_out.add_op

    if not spec.accumulate:
        _reset_affected(out, sizes)

    # Single sparse operand: only stored entries exist, so walk them directly.
    if len(operands) == 1 and operands[0].tensor.sparse and not _has_diagonal(operands[0]):
        op = operands[0]
        mapped = [c for c in _unique_chars(out.indices) if c not in op.indices]
        mapped_ranges = [range(sizes[c]) for c in mapped]
        for idx, v in op.tensor.logical_nonzeros():
            env = dict(zip(op.indices, idx))
            term = func.body(v)
            if coeff is not None:
                term = mul(coeff, term)
            for mvals in itertools.product(*mapped_ranges):
                env.update(zip(mapped, mvals))
                lin = out_t.linear_index(tuple(env[c] for c in out.indices))
                out_t._set_stored(lin, add(out_t._stored(lin), term))
        return

    chars = _unique_chars(out.indices + "".join(op.indices for op in operands))
    ranges = [range(sizes[c]) for c in chars]
    out_positions = [chars.index(c) for c in out.indices]
    for assign in itertools.product(*ranges):
        vals = []
        skip = False
        for op in operands:
            idx = tuple(assign[chars.index(c)] for c in op.indices)
            v = op.tensor.get(idx)
            if op.tensor.sparse and v == op.tensor.structure.add_id:
                skip = True
                break
            vals.append(v)
        if skip:
            continue
        term = func.body(*vals)
        if coeff is not None:
            term = mul(coeff, term)
        lin = out_t.linear_index(tuple(assign[p] for p in out_positions))
        out_t._set_stored(lin, add(out_t._stored(lin), term))


def _has_diagonal(op: IndexedTensor) -> bool:
    return len(set(op.indices)) != len(op.indices)


def apply_transform(t: ElementTransform, args) -> None:
    """Mutate the last operand elementwise; read-only operands feed the body.

    Dense targets are updated at every addressed position; sparse targets
    only at stored entries (a transform cannot create entries).  The body's
    return value replaces the element; returning None keeps the mutated
    object.
    """
    args = tuple(args)
    if len(args) != t.arity:
        raise ExpressionError(f"transform arity {t.arity} applied to {len(args)} operands")
    if not all(isinstance(a, IndexedTensor) for a in args):
        raise ExpressionError("transforms apply to indexed tensors")
    target = args[-1]
    reads = args[:-1]
    tt = target.tensor
    sizes: dict[str, int] = {}
    for view in args:
        for c, d in zip(view.indices, view.tensor.dims):
            if sizes.setdefault(c, d) != d:
                raise ExpressionError(
                    f"index {c!r} spans unequal dimensions ({sizes[c]} vs {d})"
                )

    def update(env):
        idx = tuple(env[c] for c in target.indices)
        lin = tt.linear_index(idx)
        cur = tt._stored(lin)
        rvals = [r.tensor.get(tuple(env[c] for c in r.indices)) for r in reads]
        res = t.body(*rvals, cur)
        tt._set_stored(lin, cur if res is None else res)

    free = _unique_chars("".join(r.indices for r in reads))
    extra = [c for c in free if c not in target.indices]
    if tt.sparse:
        if extra:
            raise ExpressionError(
                "sparse transform targets cannot broadcast over extra indices"
            )
        for idx, _ in list(tt.logical_nonzeros()):
            env = dict(zip(target.indices, idx))
            update(env)
        return
    chars = _unique_chars(target.indices + "".join(r.indices for r in reads))
    for assign in itertools.product(*(range(sizes[c]) for c in chars)):
        env = dict(zip(chars, assign))
        update(env)
