"""Tensor construction, symmetry enforcement, bulk IO, norms, file formats."""

import itertools
import math

import numpy as np
import pytest

from tenalg import (
    AS,
    NS,
    SH,
    SY,
    SparsityError,
    SymmetryError,
    Tensor,
    TensorError,
    make_standard_ring,
    make_tropical_semiring,
    matrix,
    read_coordinate_text,
    read_matrix_market,
    scalar,
    vector,
    write_coordinate_text,
    write_matrix_market,
)
from conftest import integer_ring


@pytest.fixture
def ring():
    return make_standard_ring()


@pytest.fixture
def tropical():
    return make_tropical_semiring()


class TestConstruction:
    def test_scalar_initialized_to_zero(self, ring):
        s = scalar(ring)
        assert s.item() == 0.0

    def test_sparse_symmetric_graph_matrix(self, tropical):
        f = Tensor(2, (4, 4), (SH, NS), True, tropical)
        assert f.nnz == 0  # newly created sparse tensors hold no data

    def test_antisymmetric_fourth_order(self, ring):
        nv, no = 3, 2
        v = Tensor(4, (nv, nv, no, no), (AS, NS, AS, NS), True, ring)
        assert v.order == 4 and v.nnz == 0

    def test_dense_filled_with_identity(self, ring):
        t = Tensor(2, (2, 3), None, False, ring)
        assert all(t.get(i, j) == 0.0 for i in range(2) for j in range(3))

    def test_symmetric_dims_must_match(self, ring):
        with pytest.raises(SymmetryError):
            Tensor(2, (3, 4), (SY, NS), False, ring)

    def test_last_attr_must_be_ns(self, ring):
        with pytest.raises(SymmetryError):
            Tensor(2, (3, 3), (NS, SY), False, ring)

    def test_as_requires_additive_inverse(self, tropical):
        with pytest.raises(SymmetryError):
            Tensor(2, (3, 3), (AS, NS), True, tropical)

    def test_order_must_match_dims(self, ring):
        with pytest.raises(TensorError):
            Tensor(3, (2, 2), None, False, ring)


class TestWriteRead:
    def test_dense_placement(self, ring):
        t = matrix(2, structure=ring)
        t.write([(0, 5.0)])
        assert t.get(0, 0) == 5.0

    def test_sparse_identity_write_is_dropped(self, ring):
        t = matrix(2, sparse=True, structure=ring)
        t.write([(3, 0.0)])
        assert t.nnz == 0

    def test_antisymmetric_mirror_read(self, ring):
        t = matrix(3, sym=AS, sparse=True, structure=ring)
        t.write([(t.linear_index((0, 1)), 2.0)])
        assert t.get(1, 0) == -2.0

    def test_sh_diagonal_reads_identity(self, tropical):
        t = matrix(3, sym=SH, sparse=True, structure=tropical)
        assert t.get(1, 1) == tropical.add_id

    def test_sh_diagonal_write_rejected(self, tropical):
        t = matrix(3, sym=SH, sparse=True, structure=tropical)
        with pytest.raises(SymmetryError):
            t.write([(t.linear_index((1, 1)), 5)])

    def test_noncanonical_write_rejected(self, ring):
        t = matrix(3, sym=SY, sparse=True, structure=ring)
        with pytest.raises(SymmetryError):
            t.write([(t.linear_index((2, 1)), 1.0)])

    def test_out_of_range(self, ring):
        t = matrix(2, structure=ring)
        with pytest.raises(TensorError):
            t.write([(4, 1.0)])
        with pytest.raises(TensorError):
            t.read([4])

    def test_accumulate_combines(self, ring):
        t = matrix(2, sparse=True, structure=ring)
        t.write([(1, 2.0)])
        t.write([(1, 3.0)], accumulate=True)
        assert t.get(0, 1) == 5.0

    def test_accumulate_to_identity_deletes(self, ring):
        t = matrix(2, sparse=True, structure=ring)
        t.write([(1, 2.0)])
        t.write([(1, -2.0)], accumulate=True)
        assert t.nnz == 0

    def test_read_bulk_round_trip(self, rng, ring):
        t = Tensor(3, (3, 4, 2), None, True, ring)
        pairs = {}
        for _ in range(100):
            lin = int(rng.integers(0, t.size))
            val = float(rng.uniform(1, 5))
            pairs[lin] = val
            t.write([(lin, val)])
        idx = sorted(pairs)
        assert t.read(idx) == [pairs[i] for i in idx]

    def test_symmetry_invariant_after_writes(self, rng, ring):
        anti = matrix(4, sym=AS, sparse=True, structure=ring)
        sym = matrix(4, sym=SY, sparse=True, structure=ring)
        for _ in range(20):
            i, j = sorted(rng.integers(0, 4, size=2))
            v = float(rng.uniform(-3, 3))
            if i < j:
                anti.write([(anti.linear_index((i, j)), v)], accumulate=True)
            sym.write([(sym.linear_index((i, j)), v)], accumulate=True)
        for i in range(4):
            for j in range(4):
                assert anti.get(i, j) + anti.get(j, i) == 0.0
                assert sym.get(i, j) - sym.get(j, i) == 0.0


class TestSparsify:
    def test_predicate_filter(self, tropical):
        t = matrix(3, sparse=True, structure=tropical)
        t.write([(i, w) for i, w in ((0, 1), (4, 2), (8, 3))])
        t.sparsify(lambda v: v == 2)
        assert t.stored_items() == [(4, 2)]

    def test_keep_all_and_none(self, ring):
        t = matrix(2, sparse=True, structure=ring)
        t.write([(0, 1.0), (3, 2.0)])
        t.sparsify(lambda v: True)
        assert t.nnz == 2
        t.sparsify(lambda v: False)
        assert t.nnz == 0

    def test_dense_rejected(self, ring):
        with pytest.raises(SparsityError):
            matrix(2, structure=ring).sparsify(lambda v: True)


class TestFillRandom:
    def test_nnz_tracks_binomial_mean(self, ring):
        n, density = 128, 0.05
        counts = []
        for seed in range(8):
            t = matrix(n, sparse=True, structure=ring)
            t.fill_random(density, seed=seed)
            counts.append(t.nnz)
        mean = n * n * density
        sigma = math.sqrt(n * n * density * (1 - density))
        assert abs(sum(counts) / len(counts) - mean) < 3 * sigma

    def test_dense_needs_full_density(self, ring):
        t = matrix(2, structure=ring)
        with pytest.raises(SparsityError):
            t.fill_random(0.5, seed=0)
        t.fill_random(1.0, seed=0)
        assert t.nnz == 4

    def test_deterministic(self, ring):
        a = matrix(16, sparse=True, structure=ring)
        b = matrix(16, sparse=True, structure=ring)
        a.fill_random(0.3, seed=7)
        b.fill_random(0.3, seed=7)
        assert a.stored_items() == b.stored_items()

    def test_density_bounds(self, ring):
        with pytest.raises(TensorError):
            matrix(2, sparse=True, structure=ring).fill_random(0.0, seed=0)


class TestNorms:
    def test_pythagorean(self, ring):
        v = vector(2, structure=ring)
        v.write([(0, 3.0), (1, 4.0)])
        assert v.norm2() == 5.0

    def test_norm1_of_empty_sparse(self, ring):
        assert matrix(3, sparse=True, structure=ring).norm1() == 0.0

    def test_tropical_identity_contributes_zero(self, tropical):
        v = vector(3, structure=tropical)
        v.write([(0, 0), (1, 7)])
        assert v.norm1() == 7.0

    def test_symmetric_counts_mirrors(self, ring):
        t = matrix(2, sym=SY, sparse=True, structure=ring)
        t.write([(t.linear_index((0, 1)), 3.0)])
        assert t.norm1() == 6.0

    def test_no_abs_map_is_an_error(self):
        from tenalg import AlgebraicStructure

        s = AlgebraicStructure(kind="monoid", elem_size=8, add_id=0,
                               add_op=lambda a, b: a + b, name="plain")
        t = vector(2, structure=s, sparse=True)
        with pytest.raises(TensorError):
            t.norm1()


class TestStorageConversion:
    def test_round_trip_preserves_logical_values(self, rng, ring):
        t = matrix(5, sparse=True, structure=ring)
        t.fill_random(0.4, seed=3)
        d = t.with_sparsity(False)
        back = d.with_sparsity(True)
        assert back.stored_items() == t.stored_items()


class TestFileFormats:
    def test_matrix_market_round_trip(self, tmp_path, tropical):
        t = matrix(5, sparse=True, structure=tropical)
        t.write([(t.linear_index((0, 1)), 3), (t.linear_index((4, 2)), 9)])
        path = tmp_path / "graph.mtx"
        write_matrix_market(t, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("%%MatrixMarket matrix coordinate integer")
        assert lines[1] == "5 5 2"
        assert lines[2].split()[:2] == ["1", "2"]  # 1-based on the wire
        back = read_matrix_market(path, tropical)
        assert back.stored_items() == t.stored_items()

    def test_matrix_market_real_round_trip(self, tmp_path, ring):
        t = matrix(3, sparse=True, structure=ring)
        t.write([(1, 0.5), (7, -2.25)])
        path = tmp_path / "m.mtx"
        write_matrix_market(t, path)
        back = read_matrix_market(path, ring)
        assert back.stored_items() == t.stored_items()

    def test_coordinate_text_round_trip(self, tmp_path, ring):
        t = Tensor(3, (2, 3, 4), None, True, ring)
        t.write([(0, 1.5), (5, 2.5), (23, -1.0)])
        path = tmp_path / "t.coord"
        write_coordinate_text(t, path)
        head = path.read_text().splitlines()[0].split()
        assert head == ["3", "2", "3", "4", "3"]
        back = read_coordinate_text(path, ring)
        assert back.stored_items() == t.stored_items()
