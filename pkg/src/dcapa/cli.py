"""Command-line harness wiring scenario, channels, beams, metrics, solver.

Subcommands:
  generate   draw a scenario and save it as JSON
  epa        evaluate the equal-power reference on a saved scenario
  optimize   run the full power-allocation solve on a saved scenario
  sweep      regenerate-and-solve over (surfaces, aperture, power, seed) grids
  plot       re-render the sweep figures from the median CSV

All outputs are CSV with schemas documented in SCHEMA.md. Runs are
deterministic given the flags; CSVs carry no timestamps, so a rerun with
the same config is byte-identical. The sweep farms points out to a
process pool capped by the CAPA_THREADS environment variable.

Exit codes: 0 success (including iteration-capped solves, which still
produce usable rows), 1 degenerate solve or other runtime failure,
2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import median

import numpy as np

from .alopt import (ALProblem, STATUS_DEGENERATE, SolveOptions,
                    qos_violations, solve)
from .emfield import DEFAULT_NODES_PER_SIDE
from .metrics import (epa_allocation, epa_mean_density, evaluate_metrics,
                      harvest_coefficients, MetricsReport)
from .pipeline import build_link
from .scenario import (generate_scenario, load_scenario, save_scenario,
                       Scenario, ScenarioError)

SCENARIO_FILE = "scenario.json"
EPA_FILE = "epa.csv"
TARGETS_FILE = "targets.csv"
RESULT_FILE = "result.csv"
TRACE_FILE = "trace.csv"
SWEEP_FILE = "sweep.csv"
MEDIANS_FILE = "sweep_medians.csv"

EPA_COLUMNS = (("seed", "surfaces", "ius", "eus", "aperture_m2", "power_A2",
                "quad_n") + MetricsReport.CSV_COLUMNS
               + ("max_v_se", "max_v_he"))
TARGETS_COLUMNS = ("uid", "kind", "sinr_floor", "harvest_floor_W")
RESULT_COLUMNS = ("seed", "surfaces", "ius", "eus", "aperture_m2", "power_A2",
                  "quad_n", "pc_A2", "pc_ratio", "max_v_se", "max_v_he",
                  "vmax", "peak_density_A2_per_m2", "density_ratio",
                  "surface_power_exceedance_A2", "outer_iters", "inner_iters",
                  "fell_back", "status")
TRACE_COLUMNS = ("outer", "f", "pc_A2", "max_v_se", "max_v_he", "rho",
                 "inner_iters", "status")
SWEEP_COLUMNS = ("surfaces", "aperture_m2", "power_A2", "seed", "pc_A2",
                 "pc_ratio", "vmax", "peak_density_A2_per_m2",
                 "density_ratio", "status")
MEDIANS_COLUMNS = ("surfaces", "aperture_m2", "power_A2", "n_seeds",
                   "pc_ratio_median", "peak_density_median",
                   "density_ratio_median")


class ConfigError(Exception):
    """Bad flag combination or environment; maps to exit code 2."""


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("CAPA_THREADS")
    if env is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"CAPA_THREADS must be an integer, got {env!r}")
        if cap < 1:
            raise ConfigError("CAPA_THREADS must be >= 1")
    return max(1, min(cap, n_tasks))


def _solve_options(args) -> SolveOptions:
    return SolveOptions(rho0=args.rho0, beta=args.beta, epsilon=args.eps,
                        delta=args.delta, memory_q=args.memory_q)


def _epa_violations(scn: Scenario, link) -> tuple[float, float]:
    # Against its own targets these are exactly zero; kept as a cross-check.
    problem = ALProblem.from_parts(link.gains, link.targets,
                                   scn.constants.sigma2,
                                   harvest_coefficients(scn), scn.L)
    epa = epa_allocation(scn.total_power, scn.S, scn.K)
    v_se, v_he = qos_violations(epa.omega, problem)
    return float(v_se.max()), float(v_he.max())


def cmd_generate(args) -> int:
    if args.k is not None and args.k != args.ius + args.eus:
        raise ConfigError(
            f"--k {args.k} does not match --ius {args.ius} + --eus {args.eus}")
    scn = generate_scenario(args.seed, args.surfaces, args.ius, args.eus,
                            args.aperture, args.power)
    out = _out_dir(args)
    path = out / SCENARIO_FILE
    save_scenario(scn, path)
    sf = scn.surfaces[0]
    print(f"scenario: S={scn.S} K={scn.K} (IU={scn.L}, EU={scn.M}) "
          f"seed={scn.seed}")
    print(f"aperture: total {scn.total_aperture:g} m^2, per-surface side "
          f"{sf.side:.6g} m, area {sf.area:.6g} m^2")
    print(f"power: total {scn.total_power:g} A^2, per-surface budget "
          f"{sf.power_budget:.6g} A^2")
    print(f"wrote {path}")
    return 0


def cmd_epa(args) -> int:
    scn = load_scenario(args.scenario)
    link = build_link(scn, args.quad_n, args.alpha_zf)
    epa = epa_allocation(scn.total_power, scn.S, scn.K)
    report = evaluate_metrics(scn, link.gains, link.beams, epa)
    v_se, v_he = _epa_violations(scn, link)
    out = _out_dir(args)
    row = ([scn.seed, scn.S, scn.L, scn.M, scn.total_aperture,
            scn.total_power, args.quad_n]
           + report.csv_row() + [v_se, v_he])
    _write_csv(out / EPA_FILE, EPA_COLUMNS, [row])
    target_rows = []
    for u, g in zip(scn.iu_users(), link.targets.gamma):
        target_rows.append([u.uid, u.kind, float(g), ""])
    for u, q in zip(scn.eu_users(), link.targets.q):
        target_rows.append([u.uid, u.kind, "", float(q)])
    _write_csv(out / TARGETS_FILE, TARGETS_COLUMNS, target_rows)
    print(f"epa: pc={report.pc!r} A^2 (= budget), min sinr "
          f"{report.sinr.min():.4g}, min harvest {report.q_linear.min():.4g} W")
    print(f"wrote {out / EPA_FILE} and {out / TARGETS_FILE}")
    return 0


def cmd_optimize(args) -> int:
    scn = load_scenario(args.scenario)
    link = build_link(scn, args.quad_n, args.alpha_zf)
    result = solve(scn, link.gains, link.targets, _solve_options(args))
    report = evaluate_metrics(scn, link.gains, link.beams, result.alloc)
    density_ratio = report.peak_density / epa_mean_density(
        scn.total_power, scn.total_aperture)
    out = _out_dir(args)
    row = [scn.seed, scn.S, scn.L, scn.M, scn.total_aperture,
           scn.total_power, args.quad_n, result.pc,
           result.pc / scn.total_power,
           float(result.v_se.max()) if result.v_se.size else 0.0,
           float(result.v_he.max()) if result.v_he.size else 0.0,
           result.vmax, report.peak_density, density_ratio,
           result.surface_power_exceedance, result.outer_iters,
           result.inner_iters_total, result.fell_back, result.status]
    _write_csv(out / RESULT_FILE, RESULT_COLUMNS, [row])
    trace_rows = [[r.outer, r.f, r.pc, r.max_v_se, r.max_v_he, r.rho,
                   r.inner_iters, r.inner_termination] for r in result.trace]
    _write_csv(out / TRACE_FILE, TRACE_COLUMNS, trace_rows)
    print(f"optimize: status={result.status} pc_ratio="
          f"{result.pc / scn.total_power:.6f} vmax={result.vmax:.3e} "
          f"outer={result.outer_iters}")
    print(f"wrote {out / RESULT_FILE} and {out / TRACE_FILE}")
    return 1 if result.status == STATUS_DEGENERATE else 0


def _sweep_point(task: tuple) -> dict:
    (surfaces, aperture, power, seed, ius, eus, quad_n, alpha_zf,
     opt_kwargs) = task
    base = {"surfaces": surfaces, "aperture_m2": aperture, "power_A2": power,
            "seed": seed}
    try:
        scn = generate_scenario(seed, surfaces, ius, eus, aperture, power)
        link = build_link(scn, quad_n, alpha_zf)
        result = solve(scn, link.gains, link.targets,
                       SolveOptions(**opt_kwargs))
        report = evaluate_metrics(scn, link.gains, link.beams, result.alloc)
        base.update(
            pc=result.pc, pc_ratio=result.pc / power, vmax=result.vmax,
            peak_density=report.peak_density,
            density_ratio=report.peak_density / epa_mean_density(power,
                                                                 aperture),
            status=result.status)
    except Exception as exc:  # recorded in the row; the sweep continues
        base.update(pc=float("nan"), pc_ratio=float("nan"),
                    vmax=float("nan"), peak_density=float("nan"),
                    density_ratio=float("nan"), status=f"error: {exc}")
    return base


def cmd_sweep(args) -> int:
    opt_kwargs = dict(rho0=args.rho0, beta=args.beta, epsilon=args.eps,
                      delta=args.delta, memory_q=args.memory_q)
    tasks = [(s, a, p, args.seed + i, args.ius, args.eus, args.quad_n,
              args.alpha_zf, opt_kwargs)
             for s in args.sweep_surfaces
             for a in args.sweep_aperture
             for p in args.sweep_power
             for i in range(args.seeds_per_point)]
    workers = _worker_count(len(tasks))
    if workers == 1:
        rows = [_sweep_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))

    out = _out_dir(args)
    _write_csv(out / SWEEP_FILE, SWEEP_COLUMNS,
               [[r["surfaces"], r["aperture_m2"], r["power_A2"], r["seed"],
                 r["pc"], r["pc_ratio"], r["vmax"], r["peak_density"],
                 r["density_ratio"], r["status"]] for r in rows])

    median_rows = []
    for s in args.sweep_surfaces:
        for a in args.sweep_aperture:
            for p in args.sweep_power:
                good = [r for r in rows
                        if (r["surfaces"], r["aperture_m2"], r["power_A2"])
                        == (s, a, p) and not r["status"].startswith("error")]
                if not good:
                    continue
                median_rows.append(
                    [s, a, p, len(good),
                     median(r["pc_ratio"] for r in good),
                     median(r["peak_density"] for r in good),
                     median(r["density_ratio"] for r in good)])
    _write_csv(out / MEDIANS_FILE, MEDIANS_COLUMNS, median_rows)

    failed = sum(1 for r in rows if r["status"].startswith("error"))
    print(f"sweep: {len(rows)} points ({failed} failed), "
          f"{len(median_rows)} median rows, workers={workers}")
    print(f"wrote {out / SWEEP_FILE} and {out / MEDIANS_FILE}")
    if not args.no_plots and median_rows:
        from .plots import read_median_rows, render_sweep_figures
        for path in render_sweep_figures(
                read_median_rows(out / MEDIANS_FILE), out):
            print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    out = Path(args.out_dir)
    medians = out / MEDIANS_FILE
    if not medians.exists():
        raise ConfigError(f"missing {medians}; run the sweep first")
    from .plots import read_median_rows, render_sweep_figures
    for path in render_sweep_figures(read_median_rows(medians), out):
        print(f"wrote {path}")
    return 0


def _int_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list must be non-empty")
    return values


def _float_list(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list must be non-empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    out_flags = argparse.ArgumentParser(add_help=False)
    out_flags.add_argument("--out-dir", default=".",
                           help="directory for output files (default: .)")

    scn_flags = argparse.ArgumentParser(add_help=False)
    scn_flags.add_argument("--seed", type=int, default=1)
    scn_flags.add_argument("--ius", type=int, default=14,
                           help="information users (default 14)")
    scn_flags.add_argument("--eus", type=int, default=6,
                           help="energy users (default 6)")

    link_flags = argparse.ArgumentParser(add_help=False)
    link_flags.add_argument("--quad-n", type=int,
                            default=DEFAULT_NODES_PER_SIDE,
                            help="quadrature nodes per side (default "
                                 f"{DEFAULT_NODES_PER_SIDE})")
    link_flags.add_argument("--alpha-zf", type=float, default=None,
                            help="precoder regularizer (default: scaled trace)")

    solver_flags = argparse.ArgumentParser(add_help=False)
    solver_flags.add_argument("--rho0", type=float, default=20.0)
    solver_flags.add_argument("--beta", type=float, default=10.0)
    solver_flags.add_argument("--eps", type=float, default=1e-3)
    solver_flags.add_argument("--delta", type=float, default=1e-9)
    solver_flags.add_argument("--memory-q", type=int, default=10)

    parser = argparse.ArgumentParser(
        prog="dcapa",
        description="Multi-surface continuous-aperture SWIPT power "
                    "allocation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", parents=[scn_flags, out_flags],
                           help="draw a scenario and save it as JSON")
    p_gen.add_argument("--surfaces", type=int, default=1)
    p_gen.add_argument("--aperture", type=float, default=1.0,
                       help="total aperture area [m^2] (default 1.0)")
    p_gen.add_argument("--power", type=float, default=1e-2,
                       help="total power budget [A^2] (default 1e-2)")
    p_gen.add_argument("--k", type=int, default=None,
                       help="optional total-user cross-check (= ius + eus)")
    p_gen.set_defaults(func=cmd_generate)

    p_epa = sub.add_parser("epa", parents=[link_flags, out_flags],
                           help="evaluate the equal-power reference")
    p_epa.add_argument("scenario", help="scenario JSON file")
    p_epa.set_defaults(func=cmd_epa)

    p_opt = sub.add_parser("optimize",
                           parents=[link_flags, solver_flags, out_flags],
                           help="run the power-allocation solve")
    p_opt.add_argument("scenario", help="scenario JSON file")
    p_opt.set_defaults(func=cmd_optimize)

    p_sweep = sub.add_parser(
        "sweep", parents=[scn_flags, link_flags, solver_flags, out_flags],
        help="grid of (surfaces, aperture, power, seed) runs")
    p_sweep.add_argument("--seeds-per-point", type=int, default=20)
    p_sweep.add_argument("--sweep-surfaces", type=_int_list,
                         default=[1, 2, 3, 4, 5, 6], metavar="S1,S2,...")
    p_sweep.add_argument("--sweep-aperture", type=_float_list,
                         default=[1.0], metavar="A1,A2,...")
    p_sweep.add_argument("--sweep-power", type=_float_list,
                         default=[1e-2], metavar="P1,P2,...")
    p_sweep.add_argument("--no-plots", action="store_true",
                         help="skip figure rendering")
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot", parents=[out_flags],
                            help="re-render sweep figures from the CSV")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
