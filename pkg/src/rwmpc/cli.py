"""Command-line front end: simulation, sweeps, benchmarking, certification.

Exit codes: 0 success (simulate: closed loop stabilized), 1 usage or
configuration error (and verify-gate failures), 2 unstable closed loop.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .config import ConfigError, build_design, build_scenario, load_config, surrogate_config
from .design import frequency_deviation, with_u_limit
from .models import zoh_discretize
from .reduction import davison_reduce, balanced_truncate
from .simulation import (COIL_CURRENT_LIMIT, bap_sweep, classify,
                         power_integral, robustness_sweep, settling_time,
                         simulate)
from .surrogate import build_surrogate


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="YAML configuration file (defaults when omitted)")
    p.add_argument("--out", type=Path, default=Path("."),
                   help="output directory for CSV files")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.add_argument("--controller", choices=["mpc", "lqg", "lqg-ewp"],
                   default=None, help="override the controller kind")
    p.add_argument("--width", choices=["wide", "narrow"], default=None,
                   help="override the solver arithmetic width")
    p.add_argument("--iters", type=str, default=None,
                   help="override iteration count(s), comma separated")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel workers for sweeps")


def _load(args) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.controller is not None:
        cfg["controller"]["kind"] = args.controller
    if args.width is not None:
        cfg["solver"]["width"] = args.width
        cfg["verify"]["width"] = args.width
    if args.iters is not None:
        values = [int(v) for v in args.iters.split(",") if v]
        cfg["solver"]["iterations"] = values[0]
        cfg["bench"]["iterations"] = values
        cfg["verify"]["iterations"] = values[0]
    return cfg


def _prepare(cfg):
    plant, design = build_design(cfg)
    scenario = build_scenario(cfg, plant, design)
    return plant, design, scenario


def cmd_simulate(args) -> int:
    cfg = _load(args)
    _, _, scenario = _prepare(cfg)
    trace = simulate(scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "trace.csv"
    trace.to_csv(path)
    settling = settling_time(trace)
    t_end = scenario.n_steps * scenario.control_period
    power = power_integral(trace, t_end) if trace.stable else float("inf")
    stabilized = trace.stable and settling is not None
    print(f"trace written to {path}")
    print(f"stabilized:        {stabilized}")
    print(f"settling time:     "
          f"{'not settled' if settling is None else f'{settling:.6f} s'}")
    print(f"peak |u|:          {trace.peak_input:.3f} V")
    print(f"peak |I_coil|:     {trace.peak_coil_current:.1f} A"
          f"{'  (EXCEEDS MONITOR LIMIT)' if trace.peak_coil_current > COIL_CURRENT_LIMIT else ''}")
    print(f"power integral:    {power:.6g} J (to {t_end:.5f} s)")
    return 0 if stabilized else 2


def cmd_sweep_bap(args) -> int:
    cfg = _load(args)
    _, _, scenario = _prepare(cfg)
    sw = cfg["sweep"]["bap"]
    grid = np.linspace(float(sw["xi_min"]), float(sw["xi_max"]),
                       int(sw["points"]))
    results = bap_sweep(scenario, grid, grid, workers=args.workers,
                        power_cap=float(sw["power_cap"]))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "bap.csv"
    controllers = list(results)
    with open(path, "w", encoding="ascii") as fh:
        cols = ["xi1", "xi2"]
        for c in controllers:
            tag = c.replace("-", "_")
            cols += [f"{tag}_stable", f"{tag}_settling_s", f"{tag}_power_j"]
        fh.write(",".join(cols) + "\n")
        n_rows = len(results[controllers[0]])
        for i in range(n_rows):
            xi1, xi2 = results[controllers[0]][i][:2]
            parts = [f"{xi1:.17g}", f"{xi2:.17g}"]
            for c in controllers:
                _, _, ok, settling, power = results[c][i]
                parts.append(str(int(ok)))
                parts.append("" if settling is None else f"{settling:.17g}")
                parts.append(f"{power:.17g}" if np.isfinite(power) else "inf")
            fh.write(",".join(parts) + "\n")
    areas = {c: sum(1 for r in results[c] if r[2]) for c in controllers}
    print(f"sweep written to {path}")
    for c, a in areas.items():
        print(f"stabilizable points ({c}): {a} / {n_rows}")
    return 0


def cmd_sweep_robustness(args) -> int:
    cfg = _load(args)
    _, _, scenario = _prepare(cfg)
    sw = cfg["sweep"]["robustness"]
    rows = robustness_sweep(scenario, [float(g) for g in sw["gamma"]],
                            [float(w) for w in sw["omega"]],
                            workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "robustness.csv"
    with open(path, "w", encoding="ascii") as fh:
        fh.write("gamma,omega,stable,settling_s,power_j\n")
        for g, w, ok, settling, power in rows:
            settle = "" if settling is None else f"{settling:.17g}"
            pw = f"{power:.17g}" if np.isfinite(power) else "inf"
            fh.write(f"{g:.17g},{w:.17g},{int(ok)},{settle},{pw}\n")
    n_ok = sum(1 for r in rows if r[2])
    print(f"sweep written to {path}")
    print(f"stable plants: {n_ok} / {len(rows)}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load(args)
    _, design, scenario = _prepare(cfg)
    scenario = replace(scenario, controller="mpc")
    trace = simulate(scenario)
    if not trace.stable:
        print("recorded run diverged; benchmark aborted", file=sys.stderr)
        return 2
    rows = bench_mod.run_bench(design, trace.x_hat,
                               [int(v) for v in cfg["bench"]["iterations"]],
                               [str(w) for w in cfg["bench"]["widths"]])
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "bench.csv"
    bench_mod.write_bench_csv(path, rows)
    print(f"benchmark written to {path}")
    print(f"{'width':8s} {'iters':>6s} {'max ms':>10s} {'mean ms':>10s} "
          f"{'worst MSE':>12s} {'worst gap':>12s}")
    for r in rows:
        print(f"{r.width:8s} {r.iterations:6d} {r.max_time_ms:10.4f} "
              f"{r.mean_time_ms:10.4f} {r.worst_mse:12.4e} "
              f"{r.worst_cost_gap:12.4e}")
    budget = scenario.control_period * 1e3
    wide20 = [r for r in rows if r.width == "wide" and r.iterations >= 20]
    if wide20:
        within = wide20[0].mean_time_ms < budget
        print(f"mean wide-width solve at {wide20[0].iterations} iterations: "
              f"{wide20[0].mean_time_ms:.4f} ms "
              f"({'within' if within else 'EXCEEDS'} the {budget:.2f} ms period)")
    return 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    _, design, scenario = _prepare(cfg)
    scenario = replace(scenario, controller="mpc")
    trace = simulate(scenario)
    if not trace.stable:
        print("recorded run diverged; verification aborted", file=sys.stderr)
        return 2
    v = cfg["verify"]
    report = bench_mod.run_verify(design, trace.x_hat, trace.t,
                                  int(v["iterations"]), str(v["width"]),
                                  float(v["mse_gate"]),
                                  float(v["cost_gap_gate"]))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "verify.csv"
    bench_mod.write_verify_csv(path, report)
    print(f"per-sample accuracy written to {path}")
    print(f"worst MSE:      {report.worst_mse:.4e} (gate {report.mse_gate:.4e})")
    print(f"worst cost gap: {report.worst_cost_gap:.4e} "
          f"(gate {report.cost_gap_gate:.4e})")
    print(f"verdict: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_reduce_model(args) -> int:
    cfg = _load(args)
    s_cfg = surrogate_config(cfg)
    plant = build_surrogate(s_cfg)
    red = cfg["model"]["reduction"]
    order = int(red["order"])
    dav = int(red["davison_order"])
    stage = plant
    if stage.n_x > dav:
        stage = davison_reduce(stage, dav,
                               dc_correction=bool(red["dc_correction"]))
    reduced = balanced_truncate(stage, order)
    grid = np.logspace(-1, 2, 120)
    deviation = frequency_deviation(plant, reduced, grid)
    gate = float(red["freq_gate"])
    eig_full = np.sort_complex(plant.eigenvalues())
    unstable_full = eig_full[eig_full.real > 0]
    eig_red = np.sort_complex(reduced.eigenvalues())
    unstable_red = eig_red[eig_red.real > 0]
    drift = float(np.abs(np.sort_complex(unstable_red)
                         - np.sort_complex(unstable_full)).max()
                  / np.abs(unstable_full).max())
    args.out.mkdir(parents=True, exist_ok=True)
    full_path = args.out / "plant_full.mat"
    red_path = args.out / "plant_reduced.mat"
    plant.save(full_path)
    reduced.save(red_path)
    print(f"full model ({plant.n_x} states) written to {full_path}")
    print(f"reduced model ({reduced.n_x} states) written to {red_path}")
    print(f"unstable eigenvalue drift (relative): {drift:.3e}")
    print(f"peak response deviation over [0.1, 100] rad/s: {deviation:.4e} "
          f"(gate {gate:.4e})")
    ok = deviation <= gate and drift <= 1e-8
    print(f"verdict: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rwmpc",
        description="Constrained MPC toolkit: simulation, sweeps, solver "
                    "benchmarks and model reduction for a desk-scale "
                    "rotating-instability plant.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": cmd_simulate,
        "sweep-bap": cmd_sweep_bap,
        "sweep-robustness": cmd_sweep_robustness,
        "bench": cmd_bench,
        "verify": cmd_verify,
        "reduce-model": cmd_reduce_model,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        _common_flags(p)
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
