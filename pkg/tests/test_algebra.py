"""Structure construction, built-in operators, and the axiom checker."""

import itertools

import numpy as np
import pytest

from tenalg import (
    AlgebraicStructure,
    PathElement,
    StructureError,
    check_axioms,
    make_path_semiring,
    make_standard_ring,
    make_tropical_semiring,
)
from conftest import integer_ring


class TestStandardRing:
    def test_addition(self):
        r = make_standard_ring()
        assert r.add_op(2.0, 3.0) == 5.0

    def test_annihilation(self):
        r = make_standard_ring()
        assert r.mul_op(r.add_id, 7.0) == 0.0

    def test_identity_on_samples(self, rng):
        r = make_standard_ring()
        for x in rng.uniform(-10, 10, size=20):
            assert r.add_op(r.add_id, x) == x


class TestTropical:
    def test_add_is_min(self):
        ts = make_tropical_semiring()
        assert ts.add_op(3, 4) == 3

    def test_mul_is_plus(self):
        ts = make_tropical_semiring()
        assert ts.mul_op(3, 4) == 7

    def test_32bit_identity_value(self):
        assert make_tropical_semiring(2**31 - 1).add_id == 1073741823

    def test_adding_identities_does_not_overflow(self):
        ts = make_tropical_semiring(2**31 - 1)
        assert ts.mul_op(ts.add_id, ts.add_id) < 2**31


class TestPathSemiring:
    def test_add_picks_smaller_weight(self):
        ps = make_path_semiring()
        assert ps.add_op(PathElement(5, 2), PathElement(3, 1)) == PathElement(3, 1)

    def test_add_tie_returns_second(self):
        # Matches the strict < comparison: equal weights keep the second operand.
        ps = make_path_semiring()
        assert ps.add_op(PathElement(3, 9), PathElement(3, 1)) == PathElement(3, 1)

    def test_mul_adds_weights_and_hops(self):
        ps = make_path_semiring()
        assert ps.mul_op(PathElement(5, 2), PathElement(3, 1)) == PathElement(8, 3)

    def test_identity(self):
        ps = make_path_semiring()
        for x in (PathElement(0, 0), PathElement(7, 3), PathElement(-2, 1)):
            assert ps.add_op(x, ps.add_id) == x

    def test_idempotent_on_equal_elements(self):
        ps = make_path_semiring()
        x = PathElement(4, 2)
        assert ps.add_op(x, x) == x


class TestConstructionValidation:
    def test_kind_field_presence_is_exact(self):
        with pytest.raises(StructureError):
            AlgebraicStructure(kind="monoid", elem_size=8, add_id=0)  # missing add_op
        with pytest.raises(StructureError):
            AlgebraicStructure(
                kind="monoid", elem_size=8, add_id=0,
                add_op=lambda a, b: a + b, mul_id=1,  # monoids have no multiply
            )
        with pytest.raises(StructureError):
            AlgebraicStructure(
                kind="semiring", elem_size=8, add_id=0, add_op=lambda a, b: a + b,
                add_inv=lambda a: -a,  # semirings have no additive inverse
                mul_id=1, mul_op=lambda a, b: a * b,
            )

    def test_variable_size_elements_rejected(self):
        with pytest.raises(StructureError):
            AlgebraicStructure(kind="set", elem_size=0)
        with pytest.raises(StructureError):
            AlgebraicStructure(kind="set", elem_size=None)

    def test_set_kind_has_no_operators(self):
        s = AlgebraicStructure(kind="set", elem_size=16)
        assert not s.has_add and not s.has_mul


class TestCheckAxioms:
    def test_tropical_passes_exhaustively(self):
        ts = make_tropical_semiring()
        report = check_axioms(ts, [0, 1, 5, ts.add_id])
        assert report.triples_checked == 64
        assert report.passed()

    def test_real_ring_distributivity_is_tiny(self):
        r = make_standard_ring()
        report = check_axioms(r, [0.1, 0.2, 0.3])
        dist = report.check("distributive")
        assert dist.max_violation <= 1e-15
        assert report.passed(rel_tol=1e-12)

    def test_wrong_identity_is_caught(self):
        bad = AlgebraicStructure(
            kind="monoid", elem_size=8, add_id=1, add_op=lambda a, b: a + b,
            name="bad_monoid",
        )
        report = check_axioms(bad, [0, 1, 2])
        assert not report.check("add_identity").exact

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            check_axioms(make_standard_ring(), [])

    def test_integer_ring_exact(self, rng):
        report = check_axioms(integer_ring(), [int(x) for x in rng.integers(-9, 9, 5)])
        assert report.passed()

    def test_annihilation_holds_for_builtins(self, rng):
        for s, samples in (
            (make_standard_ring(), list(rng.uniform(-5, 5, 8))),
            (make_tropical_semiring(), [int(x) for x in rng.integers(0, 50, 8)]),
            (make_path_semiring(), [PathElement(int(w), int(h))
                                    for w, h in rng.integers(1, 30, (8, 2))]),
        ):
            for x in samples:
                assert s.same_elements(s.mul_op(s.add_id, x), s.add_id)


class TestBuiltinAxiomSweep:
    """Each built-in structure over >= 100 random triples."""

    def test_tropical_random_samples(self, rng):
        ts = make_tropical_semiring()
        samples = [int(x) for x in rng.integers(0, 1000, size=5)] + [ts.add_id]
        report = check_axioms(ts, samples)
        assert report.triples_checked >= 100
        assert report.passed()

    def test_real_random_samples(self, rng):
        r = make_standard_ring()
        samples = [float(x) for x in rng.uniform(-100, 100, size=5)]
        report = check_axioms(r, samples)
        assert report.triples_checked >= 100
        assert report.passed(rel_tol=1e-12)

    def test_path_random_samples(self, rng):
        # Distinct weights: the min picks a unique winner, so the semiring
        # laws hold exactly on this subdomain.
        ps = make_path_semiring()
        weights = rng.choice(1000, size=5, replace=False)
        samples = [PathElement(int(w), int(h))
                   for w, h in zip(weights, rng.integers(0, 9, 5))]
        report = check_axioms(ps, samples + [ps.add_id])
        assert report.triples_checked >= 100
        assert report.passed()
