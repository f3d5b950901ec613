"""Solver latency and accuracy benchmarking on recorded closed-loop QPs.

Every QP instance of one recorded run (one linear term per control sample)
is replayed cold-started at each requested width and iteration budget.
Wall-clock statistics exclude a warm-up solve; accuracy is measured against
the active-set oracle by the bound-normalized error and by the cost gap,
which is nonnegative up to numerical slack because the oracle is the
minimizer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .condensed import linear_term, mpc_cost
from .design import ControllerDesign
from .fgm import fgm_solve, make_plan, mse
from .oracle import oracle_solve


@dataclass(frozen=True)
class BenchRow:
    width: str
    iterations: int
    max_time_ms: float
    mean_time_ms: float
    worst_mse: float
    worst_cost_gap: float


def oracle_references(design: ControllerDesign, states: np.ndarray):
    """Oracle minimizers and optimal costs for every recorded state."""
    qp = design.qp
    refs = np.empty((states.shape[0], qp.dim))
    costs = np.empty(states.shape[0])
    for k, x in enumerate(states):
        sol = oracle_solve(qp, linear_term(qp, x))
        refs[k] = sol.u_star
        costs[k] = mpc_cost(qp, sol.u_star, x)
    return refs, costs


def run_bench(design: ControllerDesign, states: np.ndarray,
              iteration_list, widths, refs=None, ref_costs=None) -> list[BenchRow]:
    """Replay all instances per (width, iteration budget) and aggregate."""
    qp = design.qp
    if refs is None or ref_costs is None:
        refs, ref_costs = oracle_references(design, states)
    rows = []
    for width in widths:
        for i_max in iteration_list:
            plan = make_plan(qp, int(i_max), width=width,
                             restart=design.solver_cfg.restart,
                             restart_rule=design.solver_cfg.restart_rule,
                             preconditioner=design.solver_cfg.preconditioner)
            f_warm = linear_term(qp, states[0])
            fgm_solve(qp, f_warm, plan)        # warm-up, excluded from timing
            times = np.empty(states.shape[0])
            worst_mse = 0.0
            worst_gap = 0.0
            for k, x in enumerate(states):
                f_c = linear_term(qp, x)
                t0 = time.perf_counter_ns()
                res = fgm_solve(qp, f_c, plan)
                times[k] = (time.perf_counter_ns() - t0) / 1e6
                worst_mse = max(worst_mse, mse(res.u_opt, refs[k],
                                               qp.u_min, qp.u_max))
                gap = mpc_cost(qp, res.u_opt, x) - ref_costs[k]
                worst_gap = max(worst_gap, gap)
            rows.append(BenchRow(width=width, iterations=int(i_max),
                                 max_time_ms=float(times.max()),
                                 mean_time_ms=float(times.mean()),
                                 worst_mse=worst_mse,
                                 worst_cost_gap=worst_gap))
    return rows


def write_bench_csv(path, rows: list[BenchRow]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("width,iterations,max_time_ms,mean_time_ms,"
                 "worst_mse,worst_cost_gap\n")
        for r in rows:
            fh.write(f"{r.width},{r.iterations},{r.max_time_ms:.6f},"
                     f"{r.mean_time_ms:.6f},{r.worst_mse:.17g},"
                     f"{r.worst_cost_gap:.17g}\n")


@dataclass(frozen=True)
class VerifyReport:
    rows: list            # (sample, t, mse, cost_gap)
    worst_mse: float
    worst_cost_gap: float
    mse_gate: float
    cost_gap_gate: float

    @property
    def passed(self) -> bool:
        return (self.worst_mse <= self.mse_gate
                and self.worst_cost_gap <= self.cost_gap_gate)


def run_verify(design: ControllerDesign, states: np.ndarray, t_grid,
               i_max: int, width: str, mse_gate: float,
               cost_gap_gate: float) -> VerifyReport:
    """Per-sample accuracy scatter at one iteration budget, with gates."""
    qp = design.qp
    refs, ref_costs = oracle_references(design, states)
    if i_max > 0:
        plan = make_plan(qp, i_max, width=width,
                         restart=design.solver_cfg.restart,
                         restart_rule=design.solver_cfg.restart_rule,
                         preconditioner=design.solver_cfg.preconditioner)
    rows = []
    for k, x in enumerate(states):
        f_c = linear_term(qp, x)
        if i_max > 0:
            u = fgm_solve(qp, f_c, plan).u_opt
        else:
            u = np.clip(np.zeros(qp.dim), qp.u_min, qp.u_max)
        err = mse(u, refs[k], qp.u_min, qp.u_max)
        gap = mpc_cost(qp, u, x) - ref_costs[k]
        rows.append((k, float(t_grid[k]), err, gap))
    worst_mse = max((r[2] for r in rows), default=0.0)
    worst_gap = max((r[3] for r in rows), default=0.0)
    return VerifyReport(rows=rows, worst_mse=worst_mse,
                        worst_cost_gap=worst_gap, mse_gate=mse_gate,
                        cost_gap_gate=cost_gap_gate)


def write_verify_csv(path, report: VerifyReport) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("sample,t,mse,cost_gap\n")
        for k, t, err, gap in report.rows:
            fh.write(f"{k},{t:.17g},{err:.17g},{gap:.17g}\n")
