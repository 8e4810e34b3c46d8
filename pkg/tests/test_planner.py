"""Grid enumeration, cost predictions, plan choice, and the lower bound."""

import itertools
import math

import pytest

from tenalg import (
    CostConfig,
    MemoryLimitError,
    ProblemShape,
    choose_plan,
    enumerate_grids,
    lower_bound,
    predict_costs,
)


class TestEnumerateGrids:
    def test_single_process(self):
        assert enumerate_grids(1) == [(1, 1, 1)]

    def test_counts(self):
        assert len(enumerate_grids(4)) == 6
        assert len(enumerate_grids(6)) == 9

    def test_products_and_order(self):
        for p in (1, 2, 4, 6, 8, 12, 64):
            grids = enumerate_grids(p)
            assert all(a * b * c == p for a, b, c in grids)
            assert grids == sorted(grids)
            assert len(set(grids)) == len(grids)

    def test_independent_enumeration_matches(self):
        # Exhaustive triple scan, no shared code with enumerate_grids.
        for p in (2, 6, 8, 36):
            brute = sorted(
                (a, b, p // (a * b))
                for a in range(1, p + 1)
                for b in range(1, p + 1)
                if p % a == 0 and (p // a) % b == 0
            )
            assert enumerate_grids(p) == brute


class TestPredictCosts:
    def test_three_term_expression_by_hand(self):
        shape = ProblemShape(m=8, k=8, n=8, z=64, p=4)
        rec = predict_costs(shape, (1, 2, 2))
        assert rec.w_3d == 64 / 2 + 64 / 2 + 64 / 4

    def test_replicated_sparse_degeneracy(self):
        z, k, n, m = 10, 32, 16, 32
        shape = ProblemShape(m=m, k=k, n=n, z=z, p=8)
        rec = predict_costs(shape, (1, 1, 8))
        # Full replication of the sparse operand: its whole size moves.
        assert rec.w_1d == z
        assert rec.w_3d == z + k * n / 8 + m * n / 8

    def test_serial_flops(self):
        shape = ProblemShape(m=8, k=8, n=8, z=64, p=1)
        assert predict_costs(shape, (1, 1, 1)).flops == 8 * 64

    def test_serial_grid_moves_nothing(self):
        shape = ProblemShape(m=8, k=8, n=8, z=64, p=1)
        rec = predict_costs(shape, (1, 1, 1))
        assert rec.w_layout == 0.0
        assert rec.w_total == rec.w_redist

    def test_infeasible_grid_is_flagged_not_rejected(self):
        shape = ProblemShape(m=64, k=64, n=64, z=4096, p=4, memory=4.0)
        rec = predict_costs(shape, (2, 2, 1))
        assert not rec.feasible

    def test_memory_constraint_uses_smallest_block(self):
        shape = ProblemShape(m=8, k=8, n=8, z=64, p=8)
        rec = predict_costs(shape, (2, 2, 2))
        assert rec.mem_required == min(2 * 64 / 4, 64 / 4, 64 / 4)

    def test_prefactors_scale_terms(self):
        shape = ProblemShape(m=8, k=8, n=8, z=64, p=4)
        doubled = predict_costs(shape, (2, 2, 1), CostConfig(alpha_mn=2.0))
        base = predict_costs(shape, (2, 2, 1))
        assert doubled.w_3d == base.w_3d + 64 / 2


class TestChoosePlan:
    def test_serial_total_is_redistribution(self):
        plan = choose_plan(ProblemShape(m=8, k=8, n=8, z=64, p=1))
        assert plan.grid == (1, 1, 1)
        assert plan.predicted.w_total == plan.predicted.w_redist

    def test_sparse_replication_wins_when_tiny(self):
        # n >= p * max(z1, z2) and z << kn: replicate the sparse operand.
        shape = ProblemShape(m=16, k=16, n=512, z=4, p=4)
        plan = choose_plan(shape)
        assert plan.grid == (1, 1, 4)
        assert plan.replicated == ("A",)

    def test_balanced_cube_for_dense_square(self):
        n = 16
        shape = ProblemShape(m=n, k=n, n=n, z=n * n, p=8)
        plan = choose_plan(shape)
        assert plan.grid == (2, 2, 2)

    def test_matches_brute_force_minimum(self):
        # Independent enumeration + objective evaluation through predict_costs.
        shapes = [
            ProblemShape(m=8, k=32, n=128, z=77, p=12),
            ProblemShape(m=64, k=64, n=8, z=640, p=16),
            ProblemShape(m=16, k=16, n=16, z=256, p=6, memory=256.0),
        ]
        for shape in shapes:
            plan = choose_plan(shape)
            best = None
            for a in range(1, shape.p + 1):
                if shape.p % a:
                    continue
                for b in range(1, shape.p // a + 1):
                    if (shape.p // a) % b:
                        continue
                    rec = predict_costs(shape, (a, b, shape.p // (a * b)))
                    if not rec.feasible:
                        continue
                    if best is None or rec.w_total < best.w_total:
                        best = rec
            assert plan.grid == best.grid
            assert plan.predicted.w_total == best.w_total

    def test_memory_exhaustion_signalled(self):
        with pytest.raises(MemoryLimitError):
            choose_plan(ProblemShape(m=64, k=64, n=64, z=4096, p=4, memory=1.0))

    def test_monotone_in_nonzeros_and_memory(self):
        base = ProblemShape(m=32, k=32, n=32, z=128, p=8)
        w = choose_plan(base).predicted.w_total
        for z in (256, 512, 1024):
            w_next = choose_plan(ProblemShape(m=32, k=32, n=32, z=z, p=8)).predicted.w_total
            assert w_next >= w
            w = w_next
        tight = choose_plan(ProblemShape(m=32, k=32, n=32, z=512, p=8, memory=200.0))
        loose = choose_plan(ProblemShape(m=32, k=32, n=32, z=512, p=8, memory=1e9))
        assert loose.predicted.w_total <= tight.predicted.w_total

    def test_json_report_keys(self):
        import json

        plan = choose_plan(ProblemShape(m=8, k=8, n=8, z=16, p=4))
        payload = json.loads(plan.to_json())
        for key in ("grid", "F", "W_redist", "W_1D", "W_2D", "W_3D", "W_total",
                    "feasible", "lower_bound"):
            assert key in payload


class TestLowerBound:
    def test_dense_serial_case(self):
        n = 32
        shape = ProblemShape(m=n, k=n, n=n, z=n * n, p=1)
        assert lower_bound(shape) == n * n

    def test_single_nonzero(self):
        for p in (1, 2, 8, 64):
            shape = ProblemShape(m=64, k=64, n=64, z=1, p=p)
            assert lower_bound(shape) == 1.0

    def test_unbounded_memory_case(self):
        n = 64
        shape = ProblemShape(m=n, k=n, n=n, z=n * n, p=64)
        assert lower_bound(shape) == pytest.approx((n**3 / 64) ** (2 / 3))
        assert lower_bound(shape) == pytest.approx(256.0)

    def test_memory_term_appears(self):
        n = 64
        inf_m = lower_bound(ProblemShape(m=n, k=n, n=n, z=n * n, p=64))
        fin_m = lower_bound(ProblemShape(m=n, k=n, n=n, z=n * n, p=64, memory=64.0))
        assert fin_m > inf_m

    def test_piecewise_boundaries_agree_within_factor_two(self):
        # Evaluate adjacent case expressions at integral boundary p values.
        for (m, k, n, z) in [(32, 32, 64, 256), (64, 64, 16, 1024), (128, 32, 8, 512)]:
            z1 = max(1.0, math.floor(min(m, math.sqrt(z))))
            z2 = max(1.0, math.floor(min(k, z / z1)))
            r1, r2, r3 = sorted((float(n), z1, z2))
            for boundary in (r2 * r3 / r1**2, r3 / r2):
                p = int(boundary)
                if p < 1 or abs(boundary - p) > 1e-9:
                    continue
                case1 = (r1 * r2 * r3 / p) ** (2 / 3)
                case2 = r1 * math.sqrt(r2 * r3 / p)
                case3 = r1 * r2
                if p == r2 * r3 / r1**2:
                    hi, lo = max(case1, case2), min(case1, case2)
                else:
                    hi, lo = max(case2, case3), min(case2, case3)
                assert hi <= 2 * lo + 1e-9

    def test_dominated_by_upper_bound_sample(self):
        for shape in (
            ProblemShape(m=64, k=64, n=64, z=4096, p=16),
            ProblemShape(m=8, k=256, n=32, z=41, p=8),
            ProblemShape(m=128, k=16, n=64, z=2048, p=64),
        ):
            plan = choose_plan(shape)
            assert lower_bound(shape) <= 4 * plan.predicted.w_total


class TestDenseSpecialization:
    def test_cube_grid_reproduces_dense_3d_cost(self):
        n, p = 64, 64
        shape = ProblemShape(m=n, k=n, n=n, z=n * n, p=p)
        q = round(p ** (1 / 3))
        rec = predict_costs(shape, (q, q, q))
        assert rec.w_3d == pytest.approx(3 * n * n / p ** (2 / 3))
