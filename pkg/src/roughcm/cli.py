"""Command-line front end: derive coefficient systems and verify order laws."""
from __future__ import annotations

import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .invariance import (FieldValidationError, derive_system, load_system,
                         propagate_zeros, residuals)
from .manifold import (LPConfig, ManifoldApproximation, NonContractionError,
                       evaluate_phi, leading_order_happ, lyapunov_perron_hc,
                       order_fit)
from .roughpath import Grid, lift_brownian
from .stationary import solve_hierarchy

EXIT_THRESHOLD = 1
EXIT_VALIDATION = 2


@click.group()
def main():
    """Taylor approximations of local random center manifolds."""


@main.command()
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True))
@click.option("--q", type=int, default=None, help="Override the expansion order.")
@click.option("--out-dir", type=click.Path(), default=".")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def derive(spec_file, q, out_dir, fmt):
    """Derive the coefficient RDE system for a system description."""
    try:
        spec = load_system(spec_file)
        cs = propagate_zeros(derive_system(spec, q=q))
    except (FieldValidationError, ValueError, KeyError) as exc:
        click.echo(f"validation failure: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "coefficient_system.json").write_text(cs.to_json())
    res = residuals(cs)
    flags = ", ".join(f"alpha_{i} = 0" for i in sorted(cs.zero_flags)) or "none"
    click.echo(f"expansion order q = {cs.q}, noise channels = {cs.noise_dim}")
    click.echo(f"vanishing coefficients: {flags}")
    for i in range(1, cs.q + 1):
        if i in cs.zero_flags:
            continue
        drift = f"({cs.A_alpha[i]})*alpha{i} + {cs.f[i]}"
        noise = " + ".join(f"({e}) dW_{ch + 1}" for ch, e in enumerate(cs.g[i])
                           if e != 0)
        line = f"dalpha_{i} = ({drift}) dt"
        if noise:
            line += " + " + noise
        click.echo(line)
    click.echo(f"M = {res['M']}; Mtilde = {res['Mtilde']}")
    click.echo(f"residual min degree: {res['min_degree']}")
    click.echo(f"wrote {out / 'coefficient_system.json'}")


def _verify_seed(args):
    (seed, spec_dict, q, grid_n, horizon, window, eta, cutoff_r, xis,
     solver, fp_tol) = args
    spec = load_system(spec_dict)
    nsys = spec.numeric()
    cs = propagate_zeros(derive_system(spec, q=q))
    res = residuals(cs)
    rp = lift_brownian(seed, Grid(-float(window), 0.0, window * grid_n),
                       d=spec.noise_dim, gamma=spec.gamma)
    hier = solve_hierarchy(cs, rp, params=spec.params, init="zero")
    ma = ManifoldApproximation(q=cs.q, alpha0=hier.alpha0, radius=max(xis))
    degs = [min(sum(k) for k in f.coeffs)
            for f in [nsys.Fs] + nsys.Gs if f.coeffs]
    l = min(degs) if degs else None
    lp = LPConfig(eta=eta, window=window, cutoff_R=cutoff_r, fp_tol=fp_tol,
                  max_iters=200)
    row = {"seed": seed, "xi_sweep": list(xis), "phi_values": [],
           "hc_values": [], "happ_values": [], "contraction_rates": [],
           "tail_bounds": {str(k): v for k, v in hier.tail_bounds.items()},
           "residual_min_degree": res["min_degree"], "failures": []}
    for xi in xis:
        row["phi_values"].append(evaluate_phi(ma, xi))
        row["happ_values"].append(
            leading_order_happ(nsys, l, xi, rp) if l is not None else 0.0)
        try:
            r = lyapunov_perron_hc(nsys, xi, rp, lp, solver=solver)
            row["hc_values"].append(r.hc)
            row["contraction_rates"].append(r.rates[-1] if r.rates else 0.0)
        except NonContractionError as exc:
            row["hc_values"].append(float("nan"))
            row["contraction_rates"].append(float("nan"))
            row["failures"].append({"xi": xi, "error": str(exc)})
    errs = [abs(h - p) for h, p in zip(row["hc_values"], row["phi_values"])]
    try:
        fit = order_fit(xis, [e for e in errs if np.isfinite(e)])
        row["order_slope"] = fit.slope
    except ValueError:
        row["order_slope"] = float("nan")
    return row


@main.command()
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True))
@click.option("--q", type=int, default=None)
@click.option("--seeds", type=int, default=1, help="Number of sampled paths.")
@click.option("--grid-n", type=int, default=128, help="Grid cells per unit time.")
@click.option("--horizon", type=float, default=None,
              help="Backward horizon for the coefficient paths (default: window).")
@click.option("--window", type=int, default=12)
@click.option("--eta", type=float, default=None,
              help="Weight exponent; default is half the stable rate.")
@click.option("--cutoff-r", type=float, default=0.5)
@click.option("--xi-min", type=float, default=0.0125)
@click.option("--xi-max", type=float, default=0.1)
@click.option("--xi-points", type=int, default=5)
@click.option("--solver", type=click.Choice(["picard", "newton"]), default="picard")
@click.option("--fp-tol", type=float, default=1e-10)
@click.option("--out-dir", type=click.Path(), default=".")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def verify(spec_file, q, seeds, grid_n, horizon, window, eta, cutoff_r,
           xi_min, xi_max, xi_points, solver, fp_tol, out_dir, fmt):
    """Check the order law |h^c - phi| = O(|xi|^{q+1}) over sampled paths."""
    try:
        spec = load_system(spec_file)
        nsys = spec.numeric()
        cs = propagate_zeros(derive_system(spec, q=q))
    except (FieldValidationError, ValueError, KeyError) as exc:
        click.echo(f"validation failure: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if horizon is not None and horizon != window:
        click.echo("note: coefficient paths use the verification window as "
                   "horizon so both truncations match", err=True)
    if eta is None:
        eta = 0.5 * nsys.As
    xis = list(np.geomspace(xi_max, xi_min, xi_points))
    if xi_max > cutoff_r:
        for xi in xis:
            if xi > cutoff_r:
                click.echo(f"warning: xi = {xi:g} exceeds cutoff radius "
                           f"{cutoff_r:g}", err=True)
        xis = [min(xi, cutoff_r) for xi in xis]
    spec_dict = json.loads(Path(spec_file).read_text())
    tasks = [(s, spec_dict, q, grid_n, horizon, window, eta, cutoff_r, xis,
              solver, fp_tol) for s in range(seeds)]
    workers = max(1, int(os.environ.get("RM_THREADS", "1")))
    if workers > 1 and seeds > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_verify_seed, tasks))
    else:
        rows = [_verify_seed(t) for t in tasks]
    rows.sort(key=lambda r: r["seed"])

    slopes = [r["order_slope"] for r in rows if np.isfinite(r["order_slope"])]
    median_slope = float(np.median(slopes)) if slopes else float("nan")
    report = {"spec": str(spec_file), "q": cs.q, "window": window,
              "grid_n": grid_n, "eta": eta, "cutoff_r": cutoff_r,
              "solver": solver, "median_slope": median_slope,
              "threshold": cs.q + 0.5, "per_seed": rows}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.json").write_text(json.dumps(report, indent=2))
    if fmt == "csv":
        with open(out / "verify_data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "xi", "phi", "hc", "happ",
                        "abs_err_phi", "abs_err_happ"])
            for r in rows:
                for xi, p, h, ha in zip(r["xi_sweep"], r["phi_values"],
                                        r["hc_values"], r["happ_values"]):
                    w.writerow([r["seed"], xi, p, h, ha, abs(h - p), abs(h - ha)])
        click.echo(f"wrote {out / 'verify_data.csv'}")
    click.echo(f"wrote {out / 'verify_report.json'}")

    failed = [r["seed"] for r in rows if r["failures"]]
    for r in rows:
        for f in r["failures"]:
            click.echo(f"seed {r['seed']} xi {f['xi']:g}: {f['error']}", err=True)
    click.echo(f"median slope {median_slope:.3f} "
               f"(threshold {cs.q + 0.5}, {len(rows)} seed(s))")
    if failed or not np.isfinite(median_slope) or median_slope < cs.q + 0.5:
        sys.exit(EXIT_THRESHOLD)


if __name__ == "__main__":
    main()
