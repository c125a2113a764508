"""Command-line orchestration: simulate, solve, validate, report.

Every subcommand reads one JSON configuration and writes CSV tables
(one file per emitted field, 17 significant digits) plus a report.json
with run metadata into the output directory. Identical configurations
and seeds produce byte-identical tables; the thread count only changes
scheduling, never results, and --strict-sequential forces single-thread
execution outright.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_gmap,
    build_model,
    build_noise,
    initial_law,
    load_config,
)
from .montecarlo import estimate_moments, g1_v_to_hs_norm, simulate_ensemble
from .oracle import lyapunov_solve, mean_exact, two_time_extend
from .petrov_galerkin import (
    PicardNonConvergence,
    TimeGrid,
    assemble_per_mode,
    discrete_inf_sup,
    per_mode_inf_sup,
    per_mode_operator_bound,
    picard_solve_second_moment,
    rhs_covariance,
    rhs_second_moment,
    solve_covariance,
    solve_mean,
)

FMT = "%.17g"


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v if isinstance(v, float) else str(v) for v in row) + "\n")


def _field_rows_2(values: np.ndarray):
    for k in range(values.shape[0]):
        for n in range(values.shape[1]):
            yield (k, n, float(values[k, n]))


def _field_rows_4(values: np.ndarray):
    for k in range(values.shape[0]):
        for n in range(values.shape[1]):
            for l in range(values.shape[2]):
                for m in range(values.shape[3]):
                    yield (k, n, l, m, float(values[k, n, l, m]))


def _config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(canon).hexdigest()


def _report(out: Path, cfg: ExperimentConfig, subcommand: str, payload: dict) -> None:
    body = {
        "subcommand": subcommand,
        "config_hash": _config_hash(cfg),
        "versions": {
            "spde_moments": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        **payload,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mc_grid_steps(cfg: ExperimentConfig) -> int:
    if cfg.mc_grid_steps is not None:
        return cfg.mc_grid_steps
    steps = cfg.time_steps
    return 16 if steps % 16 == 0 else steps


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    model, noise = build_model(cfg), build_noise(cfg)
    gmap = build_gmap(cfg, model, noise)
    mean0, _, cov0 = initial_law(cfg)
    grid_steps = _mc_grid_steps(cfg)
    substeps = cfg.mc_substeps * (cfg.time_steps // grid_steps)
    ensemble = simulate_ensemble(
        model, noise, gmap, mean0, grid_steps, cfg.mc_paths, cfg.mc_seed,
        x0_cov=None if cfg.initial_deterministic and not cov0.any() else cov0,
        substeps=substeps, threads=threads,
    )
    est = estimate_moments(ensemble)
    _write_table(out / "mean.csv", ["time_index", "mode", "value"], _field_rows_2(est.mean))
    _write_table(out / "mean_se.csv", ["time_index", "mode", "value"], _field_rows_2(est.mean_se))
    four = ["time_index_1", "mode_1", "time_index_2", "mode_2", "value"]
    _write_table(out / "second_moment.csv", four, _field_rows_4(est.second_moment))
    _write_table(out / "second_moment_se.csv", four, _field_rows_4(est.second_moment_se))
    _write_table(out / "covariance.csv", four, _field_rows_4(est.covariance))
    _write_table(out / "covariance_se.csv", four, _field_rows_4(est.covariance_se))
    _report(out, cfg, "simulate", {
        "paths": cfg.mc_paths,
        "grid_steps": grid_steps,
        "scheme_steps_per_grid_step": substeps,
        "trace_q": float(noise.trace),
    })
    return 0


def cmd_solve_mean(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    grid = TimeGrid(steps=cfg.time_steps, horizon=cfg.model_horizon)
    system = assemble_per_mode(model, grid)
    mean0, _, _ = initial_law(cfg)
    coeffs = solve_mean(system, mean0)
    exact = mean_exact(model, mean0, cfg.time_steps)[1:]  # right nodes
    nodes = grid.nodes[1:]
    _write_table(
        out / "mean_coefficients.csv",
        ["interval", "mode", "right_node_time", "value"],
        ((k, n, float(nodes[k]), float(coeffs[k, n]))
         for k in range(coeffs.shape[0]) for n in range(coeffs.shape[1])),
    )
    _write_table(
        out / "mean_error_vs_exact.csv",
        ["interval", "mode", "solver", "exact", "abs_error"],
        ((k, n, float(coeffs[k, n]), float(exact[k, n]), float(abs(coeffs[k, n] - exact[k, n])))
         for k in range(coeffs.shape[0]) for n in range(coeffs.shape[1])),
    )
    _report(out, cfg, "solve-mean", {
        "sup_error_vs_exact": float(np.max(np.abs(coeffs - exact))),
    })
    return 0


def _solve_moment_problem(cfg: ExperimentConfig, covariance: bool):
    model, noise = build_model(cfg), build_noise(cfg)
    gmap = build_gmap(cfg, model, noise)
    grid = TimeGrid(steps=cfg.time_steps, horizon=cfg.model_horizon)
    system = assemble_per_mode(model, grid)
    mean0, m2_0, cov_0 = initial_law(cfg)
    mean_coeffs = solve_mean(system, mean0)
    if covariance:
        load = rhs_covariance(system, noise, gmap, mean_coeffs, cov_0)
        solution = solve_covariance(
            system, noise, gmap, load,
            tol=cfg.solver_picard_tol, max_iter=cfg.solver_picard_max_iter,
        )
    else:
        load = rhs_second_moment(system, noise, gmap, mean_coeffs, m2_0)
        solution = picard_solve_second_moment(
            system, noise, gmap, load,
            tol=cfg.solver_picard_tol, max_iter=cfg.solver_picard_max_iter,
        )
    return model, noise, gmap, system, mean_coeffs, solution


def _emit_moment(cfg: ExperimentConfig, out: Path, covariance: bool) -> int:
    name = "covariance" if covariance else "moment"
    try:
        model, noise, gmap, system, _, solution = _solve_moment_problem(cfg, covariance)
    except PicardNonConvergence as exc:
        _write_table(out / "picard_trace.csv", ["iteration", "update_norm"],
                     ((i + 1, float(d)) for i, d in enumerate(exc.trace)))
        print(f"error: {exc}", file=sys.stderr)
        return 3
    four = ["interval_1", "mode_1", "interval_2", "mode_2", "value"]
    _write_table(out / f"{name}_coefficients.csv", four, _field_rows_4(solution.coeffs))
    _write_table(out / "picard_trace.csv", ["iteration", "update_norm"],
                 ((i + 1, float(d)) for i, d in enumerate(solution.trace)))
    diagnostics = {
        "g1_v_to_hs_norm": g1_v_to_hs_norm(gmap, model, noise),
        "discrete_inf_sup": discrete_inf_sup(system),
        "trace_q": noise.trace,
        "picard_iterations": solution.iterations,
    }
    _write_table(out / "diagnostics.csv", ["name", "value"],
                 ((k, float(v)) for k, v in diagnostics.items()))
    _report(out, cfg, f"solve-{name}", {
        "diagnostics": diagnostics,
        "picard_trace": [float(d) for d in solution.trace],
    })
    return 0


def cmd_inf_sup(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    rows = []
    global_rows = []
    for factor in (1, 2, 4):
        steps = cfg.time_steps * factor
        system = assemble_per_mode(model, TimeGrid(steps=steps, horizon=cfg.model_horizon))
        per_mode = per_mode_inf_sup(system)
        bounds = per_mode_operator_bound(system)
        for n in range(model.dim):
            rows.append((steps, n, float(model.eigenvalues[n]),
                         float(per_mode[n]), float(bounds[n])))
        global_rows.append((steps, float(per_mode.min())))
    _write_table(out / "inf_sup.csv",
                 ["steps", "mode", "eigenvalue", "inf_sup", "operator_bound"], rows)
    _write_table(out / "inf_sup_global.csv", ["steps", "value"], global_rows)
    _report(out, cfg, "inf-sup", {"sweep_steps": [cfg.time_steps * f for f in (1, 2, 4)]})
    return 0


def cmd_validate(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    started = time.perf_counter()
    try:
        model, noise, gmap, system, mean_coeffs, m2_sol = _solve_moment_problem(cfg, False)
        _, _, _, _, _, cov_sol = _solve_moment_problem(cfg, True)
    except PicardNonConvergence as exc:
        _write_table(out / "picard_trace.csv", ["iteration", "update_norm"],
                     ((i + 1, float(d)) for i, d in enumerate(exc.trace)))
        print(f"error: {exc}", file=sys.stderr)
        return 3
    mean0, m2_0, cov0 = initial_law(cfg)
    steps = cfg.time_steps

    checks: list[tuple[str, float, float, bool]] = []

    # covariance equals second moment minus the mean outer product, per solve
    mean_outer = np.einsum("kn,lm->knlm", mean_coeffs, mean_coeffs)
    identity_err = float(np.max(np.abs(cov_sol.coeffs - (m2_sol.coeffs - mean_outer))))
    checks.append(("covariance_identity_max_abs_diff", identity_err,
                   cfg.validate_identity_tol, identity_err <= cfg.validate_identity_tol))

    # equal-time second moment against the matrix differential equation
    oracle = lyapunov_solve(model, noise, gmap, mean0, m2_0, steps)
    diag = m2_sol.time_diagonal()
    oracle_scale = float(np.max(np.abs(oracle.diag_second_moment[1:])))
    diag_err = float(np.max(np.abs(diag - oracle.diag_second_moment[1:])) / oracle_scale)
    checks.append(("variational_diag_vs_oracle_rel", diag_err,
                   cfg.validate_oracle_rel_tol, diag_err <= cfg.validate_oracle_rel_tol))

    # solver mean against the exact semigroup mean, sup normalized
    exact_mean = mean_exact(model, mean0, steps)[1:]
    mean_scale = max(1.0e-300, float(np.max(np.abs(exact_mean))))
    mean_err = float(np.max(np.abs(mean_coeffs - exact_mean)) / mean_scale)
    checks.append(("variational_mean_vs_exact_rel", mean_err,
                   cfg.validate_oracle_rel_tol, mean_err <= cfg.validate_oracle_rel_tol))

    # Monte Carlo cross-checks on the recording grid
    grid_steps = _mc_grid_steps(cfg)
    substeps = cfg.mc_substeps * (steps // grid_steps)
    ensemble = simulate_ensemble(
        model, noise, gmap, mean0, grid_steps, cfg.mc_paths, cfg.mc_seed,
        x0_cov=None if cfg.initial_deterministic and not cov0.any() else cov0,
        substeps=substeps, threads=threads,
    )
    est = estimate_moments(ensemble)
    stride = steps // grid_steps
    idx = np.arange(1, grid_steps + 1) * stride - 1  # intervals ending at the MC nodes
    modes = np.arange(model.dim)
    z = cfg.validate_z_threshold

    cov_var = cov_sol.coeffs[np.ix_(idx, modes, idx, modes)]
    diff = np.abs(cov_var - est.covariance[1:, :, 1:, :])
    within = diff <= z * est.covariance_se[1:, :, 1:, :]
    frac_cov = float(within.mean())
    checks.append(("mc_vs_variational_cov_within_z", frac_cov,
                   cfg.validate_min_within_fraction,
                   frac_cov >= cfg.validate_min_within_fraction))

    oracle_two = two_time_extend(
        model,
        lyapunov_solve(model, noise, gmap, mean0, m2_0, grid_steps, substeps=4 * stride),
    )
    diff_o = np.abs(oracle_two.two_time - est.second_moment)
    within_o = diff_o <= z * est.second_moment_se
    frac_oracle = float(within_o.mean())
    checks.append(("mc_vs_oracle_two_time_within_z", frac_oracle,
                   cfg.validate_min_within_fraction,
                   frac_oracle >= cfg.validate_min_within_fraction))

    _write_table(out / "checks.csv", ["check", "value", "threshold", "status"],
                 ((name, float(value), float(threshold), "PASS" if ok else "FAIL")
                  for name, value, threshold, ok in checks))
    # regularity monitor: sup over the grid of the estimated root second
    # moment in the base and energy norms (no quantitative target exists)
    mc_diag = np.einsum("knkn->kn", est.second_moment)
    sup_h0 = float(np.sqrt(np.sum(mc_diag, axis=1).max()))
    sup_h1 = float(np.sqrt((mc_diag @ model.eigenvalues).max()))
    diagnostics = {
        "g1_v_to_hs_norm": g1_v_to_hs_norm(gmap, model, noise),
        "discrete_inf_sup": discrete_inf_sup(system),
        "trace_q": noise.trace,
        "picard_iterations_second_moment": m2_sol.iterations,
        "picard_iterations_covariance": cov_sol.iterations,
        "mc_sup_grid_h0_moment_norm": sup_h0,
        "mc_sup_grid_h1_moment_norm": sup_h1,
        "elapsed_seconds": time.perf_counter() - started,
    }
    _write_table(out / "diagnostics.csv", ["name", "value"],
                 ((k, float(v)) for k, v in diagnostics.items()))
    all_pass = all(ok for _, _, _, ok in checks)
    _report(out, cfg, "validate", {
        "diagnostics": diagnostics,
        "picard_trace_second_moment": [float(d) for d in m2_sol.trace],
        "picard_trace_covariance": [float(d) for d in cov_sol.trace],
        "checks": [
            {"check": name, "value": value, "threshold": threshold,
             "status": "PASS" if ok else "FAIL"}
            for name, value, threshold, ok in checks
        ],
        "status": "PASS" if all_pass else "FAIL",
    })
    for name, value, threshold, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.6g} (threshold {threshold:.6g})")
    return 0 if all_pass else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spde-moments",
        description="Moment and covariance laboratory for parabolic equations "
                    "with affine multiplicative Levy noise",
    )
    parser.add_argument(
        "subcommand",
        choices=["simulate", "solve-mean", "solve-moment", "solve-covariance",
                 "validate", "inf-sup"],
    )
    parser.add_argument("--config", required=True, help="path to a JSON configuration")
    parser.add_argument("--out", required=True, help="output directory (created if absent)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for path simulation (results are "
                             "independent of this value)")
    parser.add_argument("--strict-sequential", action="store_true",
                        help="force single-threaded execution")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = 1 if args.strict_sequential else max(1, args.threads)

    if args.subcommand == "simulate":
        return cmd_simulate(cfg, out, threads)
    if args.subcommand == "solve-mean":
        return cmd_solve_mean(cfg, out)
    if args.subcommand == "solve-moment":
        return _emit_moment(cfg, out, covariance=False)
    if args.subcommand == "solve-covariance":
        return _emit_moment(cfg, out, covariance=True)
    if args.subcommand == "inf-sup":
        return cmd_inf_sup(cfg, out)
    return cmd_validate(cfg, out, threads)


if __name__ == "__main__":
    sys.exit(main())
