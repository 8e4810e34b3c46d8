"""Benchmark and experiment harness.

Three desk-scale studies: multiplication of a square sparse matrix by a
narrower dense matrix (spmm), the third-order electronic-structure energy
with sparse integral blocks (mp3), and all-pairs shortest paths by dense
and sparse path doubling (apsp).  Every run verifies its result against an
independent oracle before any timing is reported, draws problems from
seeded generators, and reports the median wall time over the configured
repetitions next to the planner's predicted words and the replayed word
counts.  Wall times are informational; assertions bind only to correctness
and word counts.

Reports serialize to JSON (full payload) or CSV (one row per config).
With ``--reps 0`` timing is omitted and the report is bit-reproducible for
a fixed config and seed.  The TENALG_WORKERS environment variable sizes
the worker pool used for per-process blocks during replay.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .algebra import make_standard_ring, make_tropical_semiring
from .apps import (
    apsp_dense_doubling,
    apsp_tiskin,
    floyd_warshall_oracle,
    make_mp3_inputs,
    mp3_energy,
    random_digraph,
)
from .einsum import ExpressionSpec, execute_planned, execute_reference
from .planner import ProblemShape, choose_plan
from .simgrid import VirtualWorld
from .tensor import Tensor, matrix

__all__ = ["BenchConfig", "BenchReport", "main", "run_apsp", "run_mp3", "run_spmm"]

CSV_COLUMNS = [
    "benchmark", "n", "k", "m", "density", "procs", "memory", "seed", "seeds",
    "reps", "oracle_pass", "plan_grid", "predicted_w", "max_proc_words",
    "total_words", "balance_ratio", "nnz_median", "time_median_s", "time_spread_s",
]

REFERENCE_CHECK_LIMIT = 512  # largest n the nested-loop oracle is asked to cover


@dataclass
class BenchConfig:
    benchmark: str
    n: int
    k: Optional[int] = None
    m: Optional[int] = None
    density: float = 0.1
    procs: int = 4
    memory: float = math.inf
    seed: int = 0
    seeds: int = 1
    reps: int = 10
    verify: bool = True

    def __post_init__(self):
        if self.benchmark not in ("spmm", "mp3", "apsp"):
            raise ValueError(f"unknown benchmark {self.benchmark!r}")
        if self.seeds < 1:
            raise ValueError("at least one seed is required")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if self.reps < 0:
            raise ValueError("repetitions cannot be negative")
        if self.benchmark == "spmm" and self.k is None:
            self.k = max(1, self.n // 8)
        if self.benchmark == "mp3" and self.m is None:
            self.m = max(1, self.n // 2)

    def to_json(self) -> dict:
        d = asdict(self)
        d["memory"] = "inf" if math.isinf(self.memory) else self.memory
        return d


@dataclass
class BenchReport:
    config: BenchConfig
    runs: list = field(default_factory=list)
    timing: Optional[dict] = None
    oracle_pass: Optional[bool] = None

    def to_json(self) -> dict:
        out = {
            "config": self.config.to_json(),
            "oracle_pass": self.oracle_pass,
            "runs": self.runs,
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return out

    def csv_row(self) -> dict:
        cfg = self.config
        def med(key, default=None):
            vals = [r[key] for r in self.runs if r.get(key) is not None]
            return statistics.median(vals) if vals else default
        row = {
            "benchmark": cfg.benchmark, "n": cfg.n, "k": cfg.k, "m": cfg.m,
            "density": cfg.density, "procs": cfg.procs,
            "memory": "inf" if math.isinf(cfg.memory) else cfg.memory,
            "seed": cfg.seed, "seeds": cfg.seeds, "reps": cfg.reps,
            "oracle_pass": self.oracle_pass,
            "plan_grid": self.runs[0].get("plan_grid") if self.runs else None,
            "predicted_w": med("predicted_w"),
            "max_proc_words": med("max_proc_words"),
            "total_words": med("total_words"),
            "balance_ratio": med("balance_ratio"),
            "nnz_median": med("nnz"),
            "time_median_s": self.timing["median_s"] if self.timing else None,
            "time_spread_s": self.timing["spread_s"] if self.timing else None,
        }
        return row


def _time_reps(reps: int, thunk) -> Optional[dict]:
    if reps < 1:
        return None
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        thunk()
        times.append(time.perf_counter() - t0)
    return {
        "median_s": statistics.median(times),
        "spread_s": max(times) - min(times),
        "reps": reps,
    }


def run_spmm(cfg: BenchConfig) -> BenchReport:
    """Sparse n-by-n times dense n-by-k under the chosen decomposition."""
    r = make_standard_ring()
    report = BenchReport(config=cfg)
    oracle_ok = True if cfg.verify else None
    timed = None

    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        A = matrix(cfg.n, sparse=True, structure=r)
        A.fill_random(cfg.density, seed=seed,
                      value_sampler=lambda rng: float(rng.uniform(0.5, 1.5)))
        B = matrix(cfg.n, cfg.k, structure=r)
        B.fill_random(1.0, seed=seed + 1,
                      value_sampler=lambda rng: float(rng.uniform(-1.0, 1.0)))
        shape = ProblemShape(m=cfg.n, k=cfg.n, n=cfg.k, z=max(1, A.nnz),
                             p=cfg.procs, memory=cfg.memory)
        plan = choose_plan(shape)
        world = VirtualWorld(p=cfg.procs, memory=cfg.memory)
        C = matrix(cfg.n, cfg.k, structure=r)
        sim = execute_planned(
            ExpressionSpec(output=C["ij"], operands=(A["ik"], B["kj"])), plan, world
        )

        run = {
            "seed": seed,
            "nnz": A.nnz,
            "plan_grid": list(plan.grid),
            "predicted_w": plan.predicted.w_layout,
            "w_total": plan.predicted.w_total,
            "lower_bound": plan.lower_bound,
            "max_proc_words": sim.max_proc_words,
            "total_words": sim.total_words,
            "balance_ratio": sim.balance_ratio,
            "operand_words": sim.operand_words,
        }
        if cfg.verify:
            if cfg.n > REFERENCE_CHECK_LIMIT:
                raise ValueError(
                    f"verification supports n <= {REFERENCE_CHECK_LIMIT}; "
                    "pass --verify off for larger problems"
                )
            C_ref = matrix(cfg.n, cfg.k, structure=r)
            execute_reference(
                ExpressionSpec(output=C_ref["ij"], operands=(A["ik"], B["kj"]))
            )
            worst = 0.0
            for lin in range(C.size):
                a, b = C._stored(lin), C_ref._stored(lin)
                worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
            run["reference_rel_err"] = worst
            ok = worst <= 1e-10
            run["oracle_pass"] = ok
            oracle_ok = oracle_ok and ok
            if not ok:
                raise RuntimeError(
                    f"spmm verification failed at seed {seed}: rel err {worst}"
                )
        report.runs.append(run)
        if timed is None:
            def once():
                Ct = matrix(cfg.n, cfg.k, structure=r)
                wt = VirtualWorld(p=cfg.procs, memory=cfg.memory)
                execute_planned(
                    ExpressionSpec(output=Ct["ij"], operands=(A["ik"], B["kj"])),
                    plan, wt,
                )
            timed = _time_reps(cfg.reps, once)

    report.timing = timed
    report.oracle_pass = oracle_ok
    return report


def run_mp3(cfg: BenchConfig) -> BenchReport:
    """Sparse vs dense third-order energy with per-contraction word counts."""
    report = BenchReport(config=cfg)
    oracle_ok = True if cfg.verify else None
    timed = None

    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        world = VirtualWorld(p=cfg.procs, memory=cfg.memory)
        sparse_in = make_mp3_inputs(cfg.m, cfg.n, cfg.density, seed,
                                    sparse=True, world=world)
        e_sparse = mp3_energy(sparse_in)
        contraction_words = [
            {"operand_words": rep.operand_words, "total_words": rep.total_words,
             "max_proc_words": rep.max_proc_words, "grid": list(rep.grid)}
            for rep in world.reports
        ]
        run = {
            "seed": seed,
            "energy_sparse": e_sparse,
            "nnz": sparse_in.Vabij.nnz,
            "plan_grid": contraction_words[0]["grid"] if contraction_words else None,
            "predicted_w": None,
            "max_proc_words": max((c["max_proc_words"] for c in contraction_words),
                                  default=0),
            "total_words": sum(c["total_words"] for c in contraction_words),
            "balance_ratio": None,
            "contractions": contraction_words,
        }
        if cfg.verify:
            dense_in = make_mp3_inputs(cfg.m, cfg.n, cfg.density, seed, sparse=False)
            e_dense = mp3_energy(dense_in)
            rel = abs(e_sparse - e_dense) / max(1e-30, abs(e_sparse), abs(e_dense))
            run["energy_dense"] = e_dense
            run["rel_difference"] = rel
            ok = rel <= 1e-10
            run["oracle_pass"] = ok
            oracle_ok = oracle_ok and ok
            if not ok:
                raise RuntimeError(f"mp3 representations disagree at seed {seed}: {rel}")
        report.runs.append(run)
        if timed is None:
            local_in = make_mp3_inputs(cfg.m, cfg.n, cfg.density, seed, sparse=True)
            timed = _time_reps(cfg.reps, lambda: mp3_energy(local_in))

    report.timing = timed
    report.oracle_pass = oracle_ok
    return report


def run_apsp(cfg: BenchConfig) -> BenchReport:
    """Dense vs sparse path doubling, checked against Floyd-Warshall."""
    report = BenchReport(config=cfg)
    oracle_ok = True if cfg.verify else None
    timed = None

    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        world = VirtualWorld(p=cfg.procs, memory=cfg.memory)
        g = random_digraph(cfg.n, cfg.density, seed,
                           weight_range=(1, cfg.n * cfg.n), world=world)
        dense_d = apsp_dense_doubling(g.adjacency)
        dense_words = [
            {"total_words": rep.total_words, "max_proc_words": rep.max_proc_words}
            for rep in world.reports
        ]
        world.reports.clear()
        nnz_log: list = []
        sparse_d = apsp_tiskin(g.adjacency, nnz_log=nnz_log)
        sparse_words = [
            {"total_words": rep.total_words, "max_proc_words": rep.max_proc_words}
            for rep in world.reports
        ]
        run = {
            "seed": seed,
            "nnz": g.adjacency.nnz,
            "hop_level_nnz": nnz_log,
            "plan_grid": list(world.reports[0].grid) if world.reports else None,
            "predicted_w": None,
            "max_proc_words": max((c["max_proc_words"] for c in sparse_words), default=0),
            "total_words": sum(c["total_words"] for c in sparse_words),
            "balance_ratio": None,
            "dense_doubling_words": dense_words,
            "sparse_doubling_words": sparse_words,
        }
        if cfg.verify:
            if cfg.n > 64:
                raise ValueError("verification supports n <= 64; pass --verify off")
            oracle = floyd_warshall_oracle(g.adjacency)
            same = all(
                dense_d.get(i, j) == sparse_d.get(i, j) == oracle.get(i, j)
                for i in range(cfg.n)
                for j in range(cfg.n)
            )
            run["oracle_pass"] = same
            oracle_ok = oracle_ok and same
            if not same:
                raise RuntimeError(f"apsp algorithms disagree at seed {seed}")
        report.runs.append(run)
        if timed is None:
            local = random_digraph(cfg.n, cfg.density, seed,
                                   weight_range=(1, cfg.n * cfg.n))
            timed = _time_reps(cfg.reps, lambda: apsp_tiskin(local.adjacency))

    report.timing = timed
    report.oracle_pass = oracle_ok
    return report


RUNNERS = {"spmm": run_spmm, "mp3": run_mp3, "apsp": run_apsp}


def emit_report(report: BenchReport, fmt: str, path: Optional[str]) -> str:
    """Serialize a report; writes to ``path`` when given, returns the text."""
    if fmt == "json":
        text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    elif fmt == "csv":
        import io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerow(report.csv_row())
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tenalg-bench",
        description="Desk-scale benchmarks: spmm, mp3, apsp.",
    )
    p.add_argument("--bench", required=True, choices=("spmm", "mp3", "apsp"))
    p.add_argument("--n", type=int, default=128, help="primary problem dimension")
    p.add_argument("--k", type=int, default=None,
                   help="dense-operand columns (spmm; default n/8)")
    p.add_argument("--m", type=int, default=None,
                   help="occupied orbitals (mp3; default n/2)")
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--procs", type=int, default=4, help="virtual process count")
    p.add_argument("--memory", type=str, default="inf",
                   help="per-process element capacity, or 'inf'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of seeds to run")
    p.add_argument("--reps", type=int, default=10,
                   help="timing repetitions (0 omits timing)")
    p.add_argument("--verify", choices=("on", "off"), default="on")
    p.add_argument("--out", type=str, default=None, help="output file path")
    p.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    memory = math.inf if args.memory.strip().lower() in ("inf", "") else float(args.memory)
    try:
        cfg = BenchConfig(
            benchmark=args.bench, n=args.n, k=args.k, m=args.m,
            density=args.density, procs=args.procs, memory=memory,
            seed=args.seed, seeds=args.seeds, reps=args.reps,
            verify=args.verify == "on",
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = RUNNERS[cfg.benchmark](cfg)
    text = emit_report(report, args.fmt, args.out)
    if not args.out:
        print(text)
    else:
        print(f"wrote {args.fmt} report to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
