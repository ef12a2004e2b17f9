"""Command line entry point: ``solve``, ``verify`` and ``export``.

Exit codes:
    solve:  0 converged, 2 no convergence (bundle still written), 1 input error.
    verify: 0 all checks pass, 3 some check failed, 1 input error.
    export: 0 written, 1 input error (including unknown field names).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fieldio, fpk, hjb, nse
from .config import ConfigError, RunConfig, load_config
from .costs import kappa_bound, point_norm, verify_modulus
from .fixed_point import (
    Equilibrium,
    apply_phi,
    exploitability,
    random_seed_flow,
    solve_multistart,
)
from .measures import d1T, holder_pair_check, masses, slice_distances
from .oracles import feynman_kac_value, random_smooth_controls, simulate_particles, verify_hamiltonian_decoupling

logger = logging.getLogger("mfgtorus")

OUTPUT_ROOT_ENV = "MFGTORUS_OUTPUT_ROOT"
EQ_FIELDS = ("rho", "u", "w", "v", "p", "h", "mu")
NSE_FIELDS = ("rho", "v", "p")
EXPORTABLE = tuple(EQ_FIELDS) + tuple(f"nse_{f}" for f in NSE_FIELDS)
SLICE_FIELDS = ("h", "mu")
DENSITY_FIELDS = ("rho", "mu")
NORM_SLACK = 1e-9


class InputError(RuntimeError):
    pass


# --- bundle I/O -----------------------------------------------------------------


def _resolve_out(cfg: RunConfig, config_path: Path, override: str | None) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    if override:
        return Path(override)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        return out if out.is_absolute() else root / out
    return root / "runs" / config_path.stem


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


def write_bundle(out: Path, cfg: RunConfig, eq: Equilibrium, runs: list) -> dict:
    g = eq.grid
    cost = cfg.cost
    out.mkdir(parents=True, exist_ok=True)
    for name in EQ_FIELDS:
        fieldio.write_flow(out / "equilibrium" / f"{name}.flow", getattr(eq, name), g.d, g.T,
                           is_slice=name in SLICE_FIELDS, density=name in DENSITY_FIELDS)
    sol = nse.assemble_nse_solution(eq, cost)
    for name in NSE_FIELDS:
        fieldio.write_flow(out / "nse" / f"{name}.flow", getattr(sol, name), g.d, g.T,
                           density=name in DENSITY_FIELDS)
    _write_plot_data(out / "plots", eq, sol)
    diag = eq.diagnostics.to_dict()
    diag.pop("wall_time")
    residuals = {**hjb.hjb_report(eq.u, eq.p, eq.h, g), **hjb.momentum_residual(eq.v, eq.p, eq.h, g),
                 **fpk.fpk_residual(eq.rho, eq.v, eq.mu, g), **sol.residuals}
    table = [
        {"iteration": i + 1, "l1": diag["l1_residuals"][i], "d1T": diag["d1T_residuals"][i],
         "theta": diag["thetas"][i], "ratio": diag["lipschitz_ratios"][i]}
        for i in range(diag["iterations"])
    ]
    starts = []
    for seed, res in runs:
        if isinstance(res, Equilibrium):
            starts.append({"seed": seed, "converged": True, "iterations": res.diagnostics.iterations,
                           "d1T_to_reported": d1T(res.rho, eq.rho, g)})
        else:
            starts.append({"seed": seed, "converged": False, "error": str(res)})
    manifest = {
        "config_hash": cfg.digest(),
        "config": cfg.serialize(),
        "converged": diag["converged"],
        "certified_residual": diag["certified_residual"],
        "iterations": table,
        "residuals": {k: r.to_dict() for k, r in residuals.items()},
        "norm_budget": diag["norm_budget"],
        "measured_norms": {k: diag[k] for k in ("v_sup", "v_lip", "p_02", "h_4", "p_half_2", "kappa", "rho_holder")},
        "multistart": starts,
        "time_direction": {
            **{f"equilibrium/{f}.flow": "forward" for f in EQ_FIELDS},
            **{f"nse/{f}.flow": "reversed (slice k holds time T - t_k)" for f in NSE_FIELDS},
        },
        "grid": {"d": g.d, "N": g.N, "M": g.M, "T": g.T},
    }
    _dump(out / "manifest.json", manifest)
    return manifest


def _write_plot_data(plots: Path, eq: Equilibrium, sol) -> None:
    g = eq.grid
    fieldio.write_csv(plots / "rho.csv", eq.rho, g.d)
    fieldio.write_csv(plots / "nse_v.csv", sol.v, g.d)
    script = (
        "# gnuplot template: density slices against the flat node index\n"
        "set datafile separator ','\n"
        "set xlabel 'flat node index'\n"
        "set ylabel 'rho'\n"
        f"dx = {g.dx!r}\n"
        "plot for [k=0:{M}:{step}] 'rho.csv' every ::1 using ($1==k ? $2*dx : 1/0):4 "
        "with lines title sprintf('slice %d', k)\n"
    ).replace("{M}", str(g.M)).replace("{step}", str(max(1, g.M // 5)))
    (plots / "plot_rho.gp").write_text(script)


def load_bundle(bundle: Path, cfg: RunConfig) -> Equilibrium:
    eq_dir = bundle / "equilibrium"
    missing = [f for f in EQ_FIELDS if not (eq_dir / f"{f}.flow").is_file()]
    if missing or not (bundle / "manifest.json").is_file():
        raise InputError(f"bundle {bundle} is incomplete (missing: {', '.join(missing) or 'manifest.json'})")
    arrays = {}
    for name in EQ_FIELDS:
        header, vals = fieldio.read_flow(eq_dir / f"{name}.flow", vector=name == "v")
        arrays[name] = vals[0] if name in SLICE_FIELDS else vals
    g = cfg.grid
    if arrays["rho"].shape != g.scalar_shape():
        raise InputError("bundle grid does not match the config grid")
    from .fixed_point import Diagnostics

    return Equilibrium(g, arrays["mu"], arrays["rho"], arrays["p"], arrays["h"], arrays["w"], arrays["u"],
                       arrays["v"], Diagnostics())


# --- verification -------------------------------------------------------------


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **detail}


def _residual_check(name, report, tol):
    return _check(name, report.l2_norm <= tol, norm="rms", value=report.l2_norm, max_norm=report.max_norm,
                  tolerance=tol)


def run_checks(eq: Equilibrium, cfg: RunConfig, manifest: dict) -> list[dict]:
    """Evaluate every registered check once, in registry order."""
    g, cost, tol = eq.grid, cfg.cost, cfg.residual_tol
    checks = []
    checks.append(_check("config_hash", manifest.get("config_hash") == cfg.digest(),
                         expected=cfg.digest(), found=manifest.get("config_hash")))
    mass_err = float(np.max(np.abs(masses(eq.rho, g) - 1.0)))
    checks.append(_check("mass_and_positivity", mass_err <= 1e-12 and eq.rho.min() >= 0.0,
                         mass_error=mass_err, min_density=float(eq.rho.min())))
    checks.append(_check("w_positivity", eq.w.min() > 0.0, min_w=float(eq.w.min())))

    p_now, h_now = cost.p(eq.rho, g), cost.h(eq.rho[-1], g)
    drift = max(float(np.max(np.abs(p_now - eq.p))), float(np.max(np.abs(h_now - eq.h))))
    checks.append(_check("cost_consistency", drift <= 1e-12, max_deviation=drift))
    image = apply_phi(cost, eq.rho, eq.mu, g, cfl=cfg.cfl, clip_budget=cfg.clip_budget)
    cert = d1T(eq.rho, image, g)
    checks.append(_check("fixed_point_certificate", cert <= cfg.tol, value=cert, tolerance=cfg.tol))

    reps = {**hjb.hjb_report(eq.u, eq.p, eq.h, g), **hjb.momentum_residual(eq.v, eq.p, eq.h, g),
            **fpk.fpk_residual(eq.rho, eq.v, eq.mu, g)}
    for key in ("hjb", "hjb_terminal", "momentum", "momentum_terminal", "fpk", "fpk_initial"):
        checks.append(_residual_check(f"{key}_residual", reps[key], tol))
    sol = nse.assemble_nse_solution(eq, cost)
    for key, rep in sol.residuals.items():
        checks.append(_residual_check(f"{key}_residual", rep, tol))

    budget = point_norm(eq.p, 2, g, time_axis=True) + point_norm(eq.h, 4, g)
    kappa = kappa_bound(cost, g)
    checks.append(_check("norm_budget", budget <= kappa * (1 + NORM_SLACK) + NORM_SLACK, value=budget, kappa=kappa))
    worst = 0.0
    ok = True
    for i in range(cfg.modulus_pairs):
        r1 = random_seed_flow(eq.mu, g, 2 * i + 1)
        r2 = random_seed_flow(eq.mu, g, 2 * i + 2)
        rep = verify_modulus(cost, r1, r2, g)
        ok &= rep.holds
        worst = max(worst, rep.lhs / rep.rhs if rep.rhs > 0 else 0.0)
    checks.append(_check("modulus_continuity", ok, pairs=cfg.modulus_pairs, worst_ratio=worst))
    vmax = float(np.max(np.sqrt(np.sum(eq.v**2, axis=1))))
    holds, hw = holder_pair_check(eq.rho, g, vmax)
    checks.append(_check("holder_time_bound", holds, worst_ratio=hw))

    checks.append(_fk_check(eq, cfg))
    checks.append(_particle_check(eq, cfg))
    pert = random_smooth_controls(g, cfg.perturbations, cfg.perturbation_amplitude, seed=cfg.oracle("exploitability").seed)
    ex = exploitability(eq, cost, pert, cfg.oracle("exploitability"))
    checks.append(_check("exploitability", ex.passed, gaps=ex.gaps, std_errors=ex.gap_ses))
    dec = verify_hamiltonian_decoupling(eq, cost, cfg.oracle("decoupling"))
    checks.append(_check("hamiltonian_decoupling", dec.passed, terminal_gap=dec.terminal_gap,
                         max_martingale_residual=max(dec.martingale_residuals),
                         min_bound=min(dec.bounds), drift_constant=dec.drift_constant))
    return checks


def _fk_check(eq: Equilibrium, cfg: RunConfig) -> dict:
    g = eq.grid
    opts = cfg.oracle("feynman_kac")
    rng = np.random.default_rng(opts.seed)
    rows, ok = [], True
    for _ in range(cfg.fk_points):
        k = int(rng.integers(0, g.M))
        idx = tuple(int(i) for i in rng.integers(0, g.N, size=g.d))
        x = np.array(idx) / g.N
        est = feynman_kac_value(eq.p, eq.h, g, k * g.dt, x, opts)
        ref = float(eq.w[(k,) + idx])
        err = abs(est.estimate - ref)
        ok &= err <= 3 * est.std_error + cfg.fk_bias
        rows.append({"t": k * g.dt, "x": x.tolist(), "mc": est.estimate, "se": est.std_error, "pde": ref})
    return _check("feynman_kac", ok, points=rows, bias_budget=cfg.fk_bias)


def _particle_check(eq: Equilibrium, cfg: RunConfig) -> dict:
    res = simulate_particles(eq.v, eq.mu, eq.grid, cfg.oracle("particles"))
    dist = slice_distances(res.density, eq.rho, eq.grid)
    worst = float(np.max(dist))
    return _check("particle_law", worst <= cfg.particle_w1_tol, worst_w1=worst, tolerance=cfg.particle_w1_tol)


CHECK_NAMES = (
    "config_hash", "mass_and_positivity", "w_positivity", "cost_consistency", "fixed_point_certificate",
    "hjb_residual", "hjb_terminal_residual", "momentum_residual", "momentum_terminal_residual",
    "fpk_residual", "fpk_initial_residual", "nse_momentum_residual", "nse_continuity_residual",
    "nse_initial_velocity_residual", "nse_terminal_density_residual", "norm_budget", "modulus_continuity",
    "holder_time_bound", "feynman_kac", "particle_law", "exploitability", "hamiltonian_decoupling",
)


# --- commands -----------------------------------------------------------------


def cmd_solve(args) -> int:
    config_path = Path(args.config)
    cfg = _load(config_path, args)
    g = cfg.grid
    runs = solve_multistart(cfg.cost, cfg.mu_values(), g, cfg.seeds, theta=cfg.theta, tol=cfg.tol,
                            max_iter=cfg.max_iter, fpk_opts={"cfl": cfg.cfl, "clip_budget": cfg.clip_budget})
    found = [eq for _, eq in runs if isinstance(eq, Equilibrium)]
    converged = bool(found)
    eq = found[0] if found else runs[0][1].equilibrium
    out = _resolve_out(cfg, config_path, args.out)
    manifest = write_bundle(out, cfg, eq, runs)
    _say(args, f"{'converged' if converged else 'did not converge'}: d1T residual "
               f"{manifest['certified_residual']:.3e} after {len(manifest['iterations'])} iterations; bundle {out}")
    return 0 if converged else 2


def cmd_verify(args) -> int:
    bundle = Path(args.bundle)
    cfg = _load(Path(args.config), args)
    eq = load_bundle(bundle, cfg)
    manifest = json.loads((bundle / "manifest.json").read_text())
    checks = run_checks(eq, cfg, manifest)
    passed = all(c["passed"] for c in checks)
    report = {"passed": passed, "checks": checks}
    _dump(bundle / "verify_report.json", report)
    for c in checks:
        _say(args, f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    _say(args, f"report written to {bundle / 'verify_report.json'}")
    return 0 if passed else 3


def cmd_export(args) -> int:
    bundle = Path(args.bundle)
    if args.field not in EXPORTABLE:
        raise InputError(f"unknown field {args.field!r}; choose from {', '.join(EXPORTABLE)}")
    if args.format not in ("flow", "csv"):
        raise InputError(f"unknown format {args.format!r}; choose flow or csv")
    sub, name = ("nse", args.field[4:]) if args.field.startswith("nse_") else ("equilibrium", args.field)
    src = bundle / sub / f"{name}.flow"
    if not src.is_file():
        raise InputError(f"missing field file {src}")
    header, vals = fieldio.read_flow(src)
    dest = bundle / "export" / f"{args.field}.{args.format}"
    is_slice = header.M == 0
    data = vals[0] if is_slice else vals
    if args.format == "flow":
        fieldio.write_flow(dest, data, header.d, header.T, is_slice=is_slice, density=name in DENSITY_FIELDS)
    else:
        fieldio.write_csv(dest, data, header.d, is_slice=is_slice)
    _say(args, str(dest))
    return 0


def _load(path: Path, args) -> RunConfig:
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "threads", None):
        cfg = cfg.with_threads(args.threads)
    over = {k: v for k, v in (("cfl", getattr(args, "cfl", None)), ("clip_budget", getattr(args, "clip_budget", None)))
            if v is not None}
    if over:
        if not 0.0 < over.get("cfl", 0.25) <= 0.9:
            raise InputError("--cfl must lie in (0, 0.9]")
        cfg = replace(cfg, **over)
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgtorus", description="Mean-field game equilibria on the flat torus.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads for Monte-Carlo oracles")
    common.add_argument("--seed", type=int, default=None, help="override solver and oracle seeds")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="solve for an equilibrium and write a bundle")
    p.add_argument("config")
    p.add_argument("--cfl", type=float, default=None, help="advection Courant number (overrides config)")
    p.add_argument("--clip-budget", dest="clip_budget", type=float, default=None,
                   help="negative-mass clip budget (overrides config)")
    p.add_argument("--out", default=None, help=f"bundle directory (default from config or ${OUTPUT_ROOT_ENV})")
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("verify", parents=[common], help="run every check on a bundle")
    p.add_argument("bundle")
    p.add_argument("config")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("export", parents=[common], help="export one field as flow text or CSV")
    p.add_argument("bundle")
    p.add_argument("field")
    p.add_argument("format")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.quiet:
        logging.getLogger("mfgtorus").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, InputError, fieldio.FieldFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
