"""Batch command-line front end.

Subcommands wrap one experiment each: representation equivalence
(``verify-carleman``), cone lower bounds (``cone``), spreading-iteration
certificates (``envelope``), solver runs (``simulate``), and the full
certificate pipeline (``theorem``).  All outputs are deterministic for a
fixed config and seed.

Exit codes: 0 pass, 2 tolerance failure, 3 convergence failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import collision as coll
from . import envelope as env
from . import fieldio, solver
from .config import ConfigError, ExperimentConfig, load_config
from .core import InvariantError, check_mass_core

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_CONVERGENCE = 3
EXIT_CONFIG = 4


def _quadratures(cfg: ExperimentConfig):
    """Verification-grade quadratures, halved under --fast."""
    k = 1 if not cfg.fast else 2
    sigma = coll.SigmaQuadrature(
        n_theta=16 // k, n_phi=16 // k, theta_min=0.1,
        n_vstar=32 // k, vstar_extent=3.5)
    carleman = coll.CarlemanQuadrature(
        n_dir_polar=12 // k, n_dir_azimuth=16 // k, n_radial=48 // k,
        t_min=0.05, plane=coll.PlaneQuadrature(96 // k, 48 // k, 5.0))
    conv = coll.ConvolutionQuadrature(n=41 if k == 1 else 21, extent=4.5)
    return sigma, carleman, conv


def cmd_verify_carleman(cfg: ExperimentConfig) -> int:
    """Sigma-form vs Carleman-split battery; residuals must stay <= 2%."""
    sigma, carleman, conv = _quadratures(cfg)
    cfg.registry.set("C_cancel", coll.cancellation_constant(cfg.params),
                     provenance="empirically-measured")
    battery = coll.default_battery(5)
    rng = np.random.default_rng(cfg.seed)
    tol = 0.02 * cfg.tolerance_scale
    rows = []
    worst = 0.0
    worst_case = ""
    for pair in battery:
        pts = rng.uniform(-1.5, 1.5, size=(20, 3))
        for i, v in enumerate(pts):
            qs = coll.q_sigma(pair.f, pair.g, v, cfg.params, sigma)
            qc = (coll.q_s_carleman(pair.f, pair.g, v, cfg.params, carleman)
                  + coll.q_ns(pair.f, pair.g, v, cfg.params, cfg.registry,
                              conv))
            res = abs(qs - qc) / (1.0 + abs(qs))
            worst_case = worst_case if res <= worst else f"{pair.name}#{i}"
            worst = max(worst, res)
            rows.append((pair.name, float(i), v[0], v[1], v[2], qs, qc, res))
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    fieldio.write_csv(out / "carleman_battery.csv",
                      ["pair", "point", "vx", "vy", "vz",
                       "q_sigma", "q_carleman", "residual"], rows)
    fieldio.write_json(out / "carleman_report.json", {
        "worst_residual": f"{worst:.6e}", "tolerance": f"{tol:.6e}",
        "worst_case": worst_case, "pass": bool(worst <= tol)})
    if worst > tol:
        print(f"FAIL verify-carleman: residual {worst:.3e} > {tol:.3e} "
              f"({worst_case})")
        return EXIT_TOLERANCE
    print(f"PASS verify-carleman: worst residual {worst:.3e}")
    return EXIT_OK


def cmd_cone(cfg: ExperimentConfig) -> int:
    """Cone lower bounds for the unit-ball core at |v| = 2, 10, 50."""
    rows = []
    mus = []
    lams = []
    for speed in (2.0, 10.0, 50.0):
        v = np.array([speed, 0.0, 0.0])
        cone, mu, lam = coll.cone_of_nondegeneracy(
            v, np.zeros(3), 1.0, 1.0, cfg.params)
        rows.append((speed, mu, lam, cone.measure))
        mus.append(mu)
        lams.append(lam)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    fieldio.write_csv(out / "cone_report.csv",
                      ["speed", "mu", "lambda", "measure"], rows)
    mu_star, lam_star = min(mus), min(lams)
    fieldio.write_json(out / "cone_report.json", {
        "mu": f"{mu_star:.6e}", "lambda": f"{lam_star:.6e}",
        "pass": bool(mu_star > 0 and lam_star > 0)})
    if mu_star > 0 and lam_star > 0:
        print(f"PASS cone: mu = {mu_star:.3e}, lambda = {lam_star:.3e}")
        return EXIT_OK
    print("FAIL cone: nonpositive lower bound")
    return EXIT_TOLERANCE


def cmd_envelope(cfg: ExperimentConfig) -> int:
    """Spreading iteration + certificate for the configured core."""
    it = env.IterationConfig(
        T0=float(cfg.extras.get("envelope.T0", 1.0)),
        gamma=cfg.params.gamma, s=cfg.params.s,
        c_spread=cfg.registry.get("c_spread"),
        ell0=min(1.0, cfg.initial.delta),
        levels=int(cfg.extras.get("envelope.levels", 20)))
    trace = env.run_iteration(it)
    u = env.fit_double_exponential(trace)
    cert = env.certificate_from_trace(trace, r=cfg.initial.r,
                                      v0=cfg.initial.v0, u=u)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    fieldio.write_csv(out / "iteration_trace.csv",
                      ["n", "T", "xi", "rho", "R", "log_ell"],
                      zip(trace.n.astype(float), trace.T, trace.xi,
                          trace.rho, trace.R, trace.log_ell))
    decaying = -trace.log_ell > 0.0
    fieldio.write_dat(out / "iteration_decay.dat",
                      [trace.n[decaying].astype(float),
                       np.log(-trace.log_ell[decaying])],
                      comment="n   log log(1/ell_n)")
    fieldio.write_json(out / "envelope_certificate.json", {
        "u": f"{u:.12e}", "certificate": cert.to_json_dict()})
    print(f"PASS envelope: u = {u:.6e}, mu = {cert.mu:.6e}, "
          f"eta = {cert.eta:.6e}")
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """Solver run with snapshot and diagnostics emission."""
    if cfg.solver is None:
        print("FAIL simulate: config has no [solver] section")
        return EXIT_CONFIG
    f0 = cfg.initial.build(cfg.x_grid, cfg.v_grid)
    try:
        traj = solver.run(f0, cfg.solver, cfg.params, cfg.x_grid, cfg.v_grid)
    except solver.SolverAbort as exc:
        print(f"FAIL simulate: {exc}")
        return EXIT_CONVERGENCE
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.csv").write_text(
        "\n".join(traj.diagnostics_csv_rows()) + "\n")
    for t, f in traj.pairs():
        fieldio.write_field(out / f"field_t{t:.6f}.bin", f)
    last = traj.snapshots[-1].values[0]
    centers = cfg.v_grid.centers
    mid = cfg.v_grid.n // 2
    fieldio.write_dat(out / "profile_final.dat",
                      [centers, last[:, mid, mid]],
                      comment="vx   f(vx, 0, 0) at t_end")
    print(f"PASS simulate: {len(traj.times)} snapshots, "
          f"final mass {traj.diagnostics[-1]['mass']:.6e}")
    return EXIT_OK


def cmd_theorem(cfg: ExperimentConfig) -> int:
    """Full pipeline: mass core -> solver -> certificates -> soundness."""
    if cfg.solver is None:
        print("FAIL theorem: config has no [solver] section")
        return EXIT_CONFIG
    f0 = cfg.initial.build(cfg.x_grid, cfg.v_grid)
    core = check_mass_core(f0, delta=cfg.initial.delta / 2.0,
                           r=cfg.initial.r / 2.0)
    if core is None:
        print("FAIL theorem: no mass core in initial data")
        return EXIT_TOLERANCE
    x0, v0 = core
    seed_core = (np.array([x0, 0.0, 0.0]), np.asarray(v0, dtype=float),
                 cfg.initial.r / 2.0, cfg.initial.delta / 2.0)

    try:
        traj = solver.run(f0, cfg.solver, cfg.params, cfg.x_grid, cfg.v_grid)
    except solver.SolverAbort as exc:
        print(f"FAIL theorem: solver aborted: {exc}")
        return EXIT_CONVERGENCE

    output_times = [t for t in traj.times if t > 0.0]
    certs, log = env.orchestrate_theorem(
        seed_core, cfg.params, cfg.registry, T=cfg.solver.t_end,
        output_times=output_times)
    if not certs:
        print("FAIL theorem: no certificates emitted (see step log)")
        out = cfg.out_dir
        out.mkdir(parents=True, exist_ok=True)
        (out / "step_log.txt").write_text(log.text())
        return EXIT_TOLERANCE

    margin = solver.discretization_noise_margin(
        f0, cfg.solver, cfg.params, cfg.x_grid, cfg.v_grid)
    report = env.certificate_violations(
        traj.pairs()[1:], cfg.v_grid, certs, noise_margin=margin)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "step_log.txt").write_text(log.text())
    (out / "diagnostics.csv").write_text(
        "\n".join(traj.diagnostics_csv_rows()) + "\n")
    for t, f in traj.pairs():
        fieldio.write_field(out / f"field_t{t:.6f}.bin", f)
    fieldio.write_csv(out / "certificate_check.csv",
                      ["t", "x_index", "violations", "min_gap"],
                      [(r["t"], float(r["x_index"]), float(r["violations"]),
                        r["min_gap"]) for r in report["rows"]])
    fieldio.write_json(out / "theorem_report.json", {
        "certificates": {f"{t:.6f}": c.to_json_dict()
                         for t, c in certs.items()},
        "noise_margin": f"{margin:.12e}",
        "total_violations": report["total_violations"],
        "n_time_slices": len(certs),
        "pass": bool(report["total_violations"] == 0),
    })
    if report["total_violations"] > 0:
        print(f"FAIL theorem: {report['total_violations']} sub-envelope "
              f"violations beyond margin {margin:.3e}")
        return EXIT_TOLERANCE
    print(f"PASS theorem: {len(certs)} certified time slices, "
          f"0 violations (margin {margin:.3e})")
    return EXIT_OK


_COMMANDS = {
    "verify-carleman": cmd_verify_carleman,
    "cone": cmd_cone,
    "envelope": cmd_envelope,
    "simulate": cmd_simulate,
    "theorem": cmd_theorem,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="boltzlb",
        description="Collision-operator verification and certificate runs")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--workers", type=int, default=1,
                        help="parallelism cap (1 = serial)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--fast", action="store_true",
                        help="sub-sampled exploration mode")
    parser.add_argument("--tolerance-scale", type=float, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.fast:
        cfg.fast = True
    if args.tolerance_scale is not None:
        cfg.tolerance_scale = args.tolerance_scale
    cfg.workers = args.workers

    try:
        return _COMMANDS[args.command](cfg)
    except coll.NonConvergenceError as exc:
        print(f"convergence failure: {exc}")
        return EXIT_CONVERGENCE
    except InvariantError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
