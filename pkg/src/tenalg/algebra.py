"""Algebraic structures that parameterize all tensor operations.

A structure bundles the element type's byte width with the operators and
identities it actually has: a plain element set, an additive monoid or
group, or a semiring/ring with a second operator.  Tensor summation and
contraction are derived from these operators, so swapping the structure
swaps the meaning of "+" and "*" everywhere (e.g. min-plus for shortest
paths).

Operator properties (associativity, distributivity, annihilation by the
additive identity) are assumed by the execution engine; ``check_axioms``
is an opt-in validator that reports violations over user-supplied sample
elements.  Structures may hold only approximately (floating point) or only
on a subdomain (integer min-plus with a finite "infinity"), which is why
the validator reports magnitudes instead of a single boolean and lets a
structure supply its own equivalence predicate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

__all__ = [
    "AlgebraicStructure",
    "AxiomCheck",
    "AxiomReport",
    "ElementFunction",
    "ElementTransform",
    "PathElement",
    "StructureError",
    "check_axioms",
    "make_path_semiring",
    "make_standard_ring",
    "make_tropical_semiring",
]

INT32_MAX = 2**31 - 1


class StructureError(ValueError):
    """Raised when a structure's fields do not match its declared kind."""


# Field presence per kind: additive identity/operator/inverse, then the
# multiplicative identity/operator.
_KIND_FIELDS = {
    "set": frozenset(),
    "monoid": frozenset({"add_id", "add_op"}),
    "group": frozenset({"add_id", "add_op", "add_inv"}),
    "semiring": frozenset({"add_id", "add_op", "mul_id", "mul_op"}),
    "ring": frozenset({"add_id", "add_op", "add_inv", "mul_id", "mul_op"}),
}
_ALL_FIELDS = ("add_id", "add_op", "add_inv", "mul_id", "mul_op")


@dataclass(frozen=True)
class AlgebraicStructure:
    """Element type descriptor plus the operator/identity bundle of one kind.

    ``elem_size`` is the fixed byte width of one element; variable-size
    element types are rejected.  ``abs_value`` maps an element to a real
    magnitude for norms.  ``equiv`` is an optional equality-up-to-encoding
    predicate used by the axiom checker (e.g. two saturated "infinity"
    values compare equal).  ``kernel_hint`` names a specialized inner
    kernel; ``None`` selects the structure-generic one.
    """

    kind: str
    elem_size: int
    add_id: Any = None
    add_op: Optional[Callable[[Any, Any], Any]] = None
    add_inv: Optional[Callable[[Any], Any]] = None
    mul_id: Any = None
    mul_op: Optional[Callable[[Any, Any], Any]] = None
    abs_value: Optional[Callable[[Any], float]] = None
    equiv: Optional[Callable[[Any, Any], bool]] = None
    name: str = ""
    kernel_hint: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _KIND_FIELDS:
            raise StructureError(f"unknown structure kind {self.kind!r}")
        if not isinstance(self.elem_size, int) or self.elem_size <= 0:
            raise StructureError(
                "elements must have a fixed positive byte width, "
                f"got elem_size={self.elem_size!r}"
            )
        required = _KIND_FIELDS[self.kind]
        for f in _ALL_FIELDS:
            present = getattr(self, f) is not None
            if f in required and not present:
                raise StructureError(f"{self.kind} requires field {f!r}")
            if f not in required and present:
                raise StructureError(f"{self.kind} must not define field {f!r}")

    @property
    def has_add(self) -> bool:
        return self.add_op is not None

    @property
    def has_mul(self) -> bool:
        return self.mul_op is not None

    def same_elements(self, a: Any, b: Any) -> bool:
        """Equality used for axiom checks; falls back to ``==``."""
        if self.equiv is not None:
            return bool(self.equiv(a, b))
        return a == b

    def __repr__(self):
        label = self.name or self.kind
        return f"AlgebraicStructure({label}, kind={self.kind}, elem_size={self.elem_size})"


@dataclass(frozen=True)
class ElementFunction:
    """Pure elementwise function replacing the structure's multiply.

    Signatures are ``out <- (a)`` or ``out <- (a, b)``.  The body must be
    deterministic and side-effect free.  Non-distributive functions are
    rejected at application time: summing their outputs under the output
    structure's addition would not commute with the implied loop nest.
    """

    arity: int
    body: Callable[..., Any]
    in_types: tuple = ()
    out_type: Optional[type] = None
    distributive: bool = True
    name: str = ""

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise StructureError(f"function arity must be 1 or 2, got {self.arity}")

    def __call__(self, *indexed):
        # Builds a deferred expression over indexed tensors; the import is
        # local to keep algebra free of tensor-layer dependencies.
        from .einsum import function_expression

        return function_expression(self, indexed)


@dataclass(frozen=True)
class ElementTransform:
    """In-place elementwise update of the last operand.

    Signatures are ``(inout)``, ``(a, inout)`` and ``(a, b, inout)``.  The
    body receives the read-only operands followed by the current value of
    the modified operand and returns its replacement; returning ``None``
    means the (mutable) value object was updated in place.  A transform
    overrides the output structure's addition entirely.
    """

    arity: int
    body: Callable[..., Any]
    read_types: tuple = ()
    inout_type: Optional[type] = None
    name: str = ""

    def __post_init__(self):
        if self.arity not in (1, 2, 3):
            raise StructureError(f"transform arity must be 1..3, got {self.arity}")

    def __call__(self, *indexed) -> None:
        from .einsum import apply_transform

        apply_transform(self, indexed)


@dataclass(frozen=True)
class PathElement:
    """Weight/hop-count pair for shortest-path algebra.

    Under the path semiring, addition keeps the operand with the smaller
    weight (ties keep the second operand, matching a strict ``<`` test)
    and multiplication adds weights and hop counts componentwise.
    """

    w: int
    h: int = 0

    def __iter__(self):
        return iter((self.w, self.h))


PATH_INF_WEIGHT = INT32_MAX // 2


def make_standard_ring() -> AlgebraicStructure:
    """Ring of double-precision reals with the usual addition and product."""
    return AlgebraicStructure(
        kind="ring",
        elem_size=8,
        add_id=0.0,
        add_op=lambda a, b: a + b,
        add_inv=lambda a: -a,
        mul_id=1.0,
        mul_op=lambda a, b: a * b,
        abs_value=abs,
        name="real_ring",
        kernel_hint="real",
    )


def make_tropical_semiring(max_int: int = INT32_MAX) -> AlgebraicStructure:
    """Min-plus semiring on integers.

    ``max_int`` is the largest representable integer of the element type;
    the additive identity is ``max_int // 2`` so that min-multiplying two
    identities (integer addition) cannot overflow.  Values at or above the
    identity are one saturated "unreachable" class for equivalence and
    norm purposes.
    """
    inf = max_int // 2

    def tropical_abs(x):
        return 0.0 if x >= inf else float(x)

    return AlgebraicStructure(
        kind="semiring",
        elem_size=4 if max_int <= INT32_MAX else 8,
        add_id=inf,
        add_op=lambda a, b: a if a <= b else b,
        mul_id=0,
        mul_op=lambda a, b: a + b,
        abs_value=tropical_abs,
        equiv=lambda a, b: a == b or (a >= inf and b >= inf),
        name="tropical",
        kernel_hint="tropical",
    )


def make_path_semiring() -> AlgebraicStructure:
    """Min-plus semiring on (weight, hops) pairs.

    Addition returns the operand with smaller weight; on equal weights the
    second operand wins, exactly mirroring a strict ``a.w < b.w`` branch.
    Multiplication composes paths: weights and hop counts add.
    """
    inf = PATH_INF_WEIGHT

    def path_add(a: PathElement, b: PathElement) -> PathElement:
        if a.w < b.w:
            return a
        return b

    def path_mul(a: PathElement, b: PathElement) -> PathElement:
        return PathElement(a.w + b.w, a.h + b.h)

    def path_abs(p: PathElement) -> float:
        return 0.0 if p.w >= inf else float(p.w)

    return AlgebraicStructure(
        kind="semiring",
        elem_size=8,
        add_id=PathElement(inf, 0),
        add_op=path_add,
        mul_id=PathElement(0, 0),
        mul_op=path_mul,
        abs_value=path_abs,
        equiv=lambda a, b: a == b or (a.w >= inf and b.w >= inf),
        name="path",
        kernel_hint="path",
    )


@dataclass
class AxiomCheck:
    """Outcome of one axiom over all sampled operand combinations."""

    name: str
    exact: bool
    max_violation: float
    failures: int = 0


@dataclass
class AxiomReport:
    structure: AlgebraicStructure
    triples_checked: int
    checks: list[AxiomCheck] = field(default_factory=list)

    def check(self, name: str) -> AxiomCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def passed(self, rel_tol: float = 0.0) -> bool:
        return all(c.exact or c.max_violation <= rel_tol for c in self.checks)

    def max_violation(self) -> float:
        return max((c.max_violation for c in self.checks), default=0.0)


def _violation(s: AlgebraicStructure, lhs: Any, rhs: Any) -> float:
    """Relative magnitude of a mismatch; 0/1 for non-numeric elements."""
    if s.same_elements(lhs, rhs):
        return 0.0
    if isinstance(lhs, (int, float)) and isinstance(rhs, (int, float)):
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
    return 1.0


def check_axioms(s: AlgebraicStructure, samples: Sequence[Any]) -> AxiomReport:
    """Validate the structure's assumed axioms over all sampled triples.

    Checks whatever the kind declares: associativity and commutativity of
    addition, the additive identity and (when present) inverse, the
    multiplicative identity, distributivity, and annihilation by the
    additive identity.  Floating-point structures legitimately violate
    some axioms by rounding, so every check carries its maximum relative
    violation rather than only a pass flag.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("check_axioms requires a nonempty sample list")
    report = AxiomReport(structure=s, triples_checked=len(samples) ** 3)

    def run(name, pairs_of_sides):
        worst = 0.0
        failures = 0
        for lhs, rhs in pairs_of_sides:
            v = _violation(s, lhs, rhs)
            if v > 0.0:
                failures += 1
                worst = max(worst, v)
        report.checks.append(
            AxiomCheck(name=name, exact=failures == 0, max_violation=worst, failures=failures)
        )

    if s.has_add:
        add = s.add_op
        run(
            "add_associative",
            (
                (add(add(a, b), c), add(a, add(b, c)))
                for a, b, c in itertools.product(samples, repeat=3)
            ),
        )
        run(
            "add_commutative",
            ((add(a, b), add(b, a)) for a, b in itertools.product(samples, repeat=2)),
        )
        run(
            "add_identity",
            ((add(s.add_id, a), a) for a in samples),
        )
    if s.add_inv is not None:
        run(
            "add_inverse",
            ((s.add_op(a, s.add_inv(a)), s.add_id) for a in samples),
        )
    if s.has_mul:
        mul = s.mul_op
        add = s.add_op
        run(
            "mul_associative",
            (
                (mul(mul(a, b), c), mul(a, mul(b, c)))
                for a, b, c in itertools.product(samples, repeat=3)
            ),
        )
        run(
            "mul_identity",
            itertools.chain(
                ((mul(s.mul_id, a), a) for a in samples),
                ((mul(a, s.mul_id), a) for a in samples),
            ),
        )
        run(
            "distributive",
            itertools.chain(
                (
                    (mul(a, add(b, c)), add(mul(a, b), mul(a, c)))
                    for a, b, c in itertools.product(samples, repeat=3)
                ),
                (
                    (mul(add(b, c), a), add(mul(b, a), mul(c, a)))
                    for a, b, c in itertools.product(samples, repeat=3)
                ),
            ),
        )
        run(
            "annihilation",
            itertools.chain(
                ((mul(s.add_id, a), s.add_id) for a in samples),
                ((mul(a, s.add_id), s.add_id) for a in samples),
            ),
        )
    return report
