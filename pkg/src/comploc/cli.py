"""Command-line front end: solve | optimize | theta | limit | compare | exact1d.

Every run reads one JSON config, writes its artifacts plus a verbatim config
copy and a record.json into the output folder, and is reproducible from
(config, seed, version).  Exit codes: 0 ok, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import datetime
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .balls import BallConfig, empirical_measure, lattice_config, hex_config
from .distances import histogram_l1, w1_atoms_vs_density
from .errors import ComplocError, ConfigError
from .files import (
    read_json,
    write_field_csv,
    write_json,
    write_jsonl,
    write_table_csv,
    write_theta_csv,
)
from .limit import (
    DensityMeasure,
    exact_oned_gfunction,
    oned_limit_exact,
    oned_theta_exact,
    solve_limit,
)
from .placement import OptimizerSettings, optimize
from .poisson import boundary_mask, compliance, dirichlet_energy, rasterize, solve_poisson
from .runconfig import RunConfig, apply_overrides, config_from_dict, parse_config
from .theta import (
    GFunction,
    ThetaSample,
    ThetaTable,
    build_g,
    cube_circumradius,
    estimate_theta,
    lower_bound,
    raw_g_values,
    t1_estimate,
    theta_derivative_bound,
    upper_bound_neumann,
)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class RunFolder:
    def __init__(self, command: str, cfg: RunConfig, outdir: str):
        self.command = command
        self.cfg = cfg
        self.outdir = outdir
        self.started = _now()
        self.artifacts: list[str] = []
        os.makedirs(outdir, exist_ok=True)
        self.add("config.json", lambda p: write_json(p, cfg.raw))

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def add(self, name: str, writer) -> str:
        p = self.path(name)
        writer(p)
        self.artifacts.append(name)
        return p

    def finish(self, summary: dict) -> dict:
        missing = [a for a in self.artifacts if not os.path.exists(self.path(a))]
        if missing:
            raise ComplocError(f"artifacts vanished before record: {missing}")
        record = {
            "command": self.command,
            "config": self.cfg.raw,
            "started": self.started,
            "finished": _now(),
            "artifacts": sorted(self.artifacts),
            "summary": summary,
            "version": f"comploc {__version__}",
        }
        write_json(self.path("record.json"), record)
        return record


def _build_balls(cfg: RunConfig, rng: np.random.Generator) -> BallConfig | None:
    spec = cfg.balls
    if spec is None:
        return None
    dom = cfg.domain
    if spec.centers is not None:
        return BallConfig(dom, np.asarray(spec.centers, dtype=float), cfg.alpha)
    if spec.generator == "lattice":
        return lattice_config(spec.k, cfg.alpha, dom)
    if spec.generator == "hex":
        return hex_config(spec.k ** dom.d, cfg.alpha, dom)
    if spec.random_n is not None:
        centers = rng.random((spec.random_n, dom.d)) * np.asarray(dom.extents)
        return BallConfig(dom, centers, cfg.alpha)
    raise ConfigError(f"unsupported balls spec {spec}")


def cmd_solve(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("solve", cfg, outdir)
    dom = cfg.domain
    rng = np.random.default_rng(cfg.seed)
    balls = _build_balls(cfg, rng)
    h = cfg.spacing(balls.radius if balls is not None else None)
    f = cfg.f.build(dom, h)
    mask = rasterize(balls, dom, h) if balls is not None else boundary_mask(dom, h)
    u, stats = solve_poisson(dom, mask, f)
    comp = compliance(u, f)
    energy = dirichlet_energy(u, mask)
    run.add("u.csv", lambda p: write_field_csv(p, u))
    summary = {
        "compliance": comp,
        "energy": energy,
        "residual": stats.residual,
        "iterations": stats.iterations,
        "method": stats.method,
        "h": h,
        "n_pinned_interior": mask.n_pinned_interior,
    }
    run.add("summary.json", lambda p: write_json(p, summary))
    return run.finish(summary)


def cmd_optimize(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("optimize", cfg, outdir)
    dom = cfg.domain
    rng = np.random.default_rng(cfg.seed)
    start = _build_balls(cfg, rng)
    if start is None:
        raise ConfigError("optimize needs a balls spec")
    h = cfg.spacing(start.radius if start.radius > 0 else None)
    f = cfg.f.build(dom, h)
    trace = optimize(start, f, cfg.optimizer, h)
    run.add(
        "trace.jsonl",
        lambda p: write_jsonl(
            p,
            [
                {
                    "iteration": r.iteration,
                    "config_id": r.config_id,
                    "compliance": r.compliance,
                    "scaled_compliance": r.scaled_compliance,
                    "step": r.step,
                }
                for r in trace.records
            ],
        ),
    )
    run.add(
        "final_config.json",
        lambda p: write_json(p, trace.final_config.to_json_dict()),
    )
    bins = max(2, int(round(start.n ** (1.0 / dom.d))))
    em = empirical_measure(trace.final_config, bins)
    rows = [
        tuple(idx) + (float(em.histogram[idx]),)
        for idx in np.ndindex(em.histogram.shape)
    ]
    run.add(
        "histogram.csv",
        lambda p: write_table_csv(
            p, [f"bin{a}" for a in range(dom.d)] + ["density"], rows
        ),
    )
    summary = {
        "final_compliance": trace.final_compliance,
        "final_scaled": trace.final_scaled,
        "converged": trace.converged,
        "n_solves": trace.n_solves,
        "accepted_iterates": len(trace.records),
        "restart_values": trace.restart_values,
        "h": h,
    }
    run.add("summary.json", lambda p: write_json(p, summary))
    return run.finish(summary)


def _bounds_row(alpha: float, theta_hat: float, d: int):
    r0 = cube_circumradius(d)
    if d == 1:
        exact = oned_theta_exact(alpha)
        return (alpha, exact, theta_hat, exact)
    upper = upper_bound_neumann(alpha, d) if 0 < alpha < r0 else 0.0
    lo = lower_bound(alpha, d) if alpha > 0 else math.inf
    return (alpha, lo, theta_hat, upper)


def cmd_theta(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("theta", cfg, outdir)
    spec = cfg.theta
    if spec is None:
        raise ConfigError("theta command needs a theta section")
    d = cfg.dimension
    rule = cfg.resolution_rule()

    def one(alpha: float):
        return estimate_theta(
            alpha,
            d,
            spec.k_list,
            families=spec.families,
            h_rule=rule,
            opt_budget=spec.opt_budget,
            opt_n_cap=spec.opt_n_cap,
            seed=cfg.seed,
        )

    failures: dict[float, str] = {}
    results: dict[float, tuple] = {}
    alphas = sorted(float(a) for a in spec.alphas)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futs = {a: pool.submit(one, a) for a in alphas}
            for a, fut in futs.items():
                try:
                    results[a] = fut.result()
                except ComplocError as exc:
                    failures[a] = str(exc)
    else:
        for a in alphas:
            try:
                results[a] = one(a)
            except ComplocError as exc:
                failures[a] = str(exc)
    if not results:
        raise ComplocError(f"every theta sample failed: {failures}")
    samples = [
        ThetaSample(
            alpha=a,
            theta=res[0],
            err=res[1],
            k_max=res[2]["k_list"][-1],
            h=res[2]["h"],
            family=res[2]["family"],
        )
        for a, res in sorted(results.items())
    ]
    table = ThetaTable(d, samples)
    run.add("theta_table.json", lambda p: write_json(p, table.to_json_dict()))
    run.add("theta_table.csv", lambda p: write_theta_csv(p, table))
    rows = [_bounds_row(s.alpha, s.theta, d) for s in table.samples]
    run.add(
        "bounds.csv",
        lambda p: write_table_csv(p, ["alpha", "lower", "estimate", "upper"], rows),
    )
    diags = _theta_diagnostics(table)
    g_art = None
    if spec.g_alpha is not None:
        gx = np.geomspace(
            spec.g_x_grid["lo"], spec.g_x_grid["hi"], int(spec.g_x_grid["points"])
        )
        g = build_g(table, spec.g_alpha, gx)
        raw = raw_g_values(table, spec.g_alpha, gx)
        second = raw[:-2] - 2.0 * raw[1:-1] + raw[2:]
        scale = np.maximum.reduce([np.abs(raw[:-2]), np.abs(raw[1:-1]),
                                   np.abs(raw[2:]), np.full(raw.size - 2, 1e-300)])
        diags["g_alpha"] = spec.g_alpha
        diags["g_min_relative_second_difference"] = float(
            np.min(second / scale)
        ) if second.size else 0.0
        diags["g_envelope_max_deviation"] = float(
            np.max(np.abs(g(gx) - raw))
        )
        g_art = g
        run.add("gfunction.json", lambda p: write_json(p, g.to_json_dict()))
    if failures:
        diags["failed_alphas"] = {str(a): msg for a, msg in failures.items()}
    run.add("diagnostics.json", lambda p: write_json(p, diags))
    summary = {
        "alphas": [s.alpha for s in table.samples],
        "thetas": [s.theta for s in table.samples],
        "errs": [s.err for s in table.samples],
        "t1_estimate": diags["t1_estimate"],
        "monotone_within_2err": diags["monotone_within_2err"],
        "g_written": g_art is not None,
    }
    run.add("summary.json", lambda p: write_json(p, summary))
    return run.finish(summary)


def _theta_diagnostics(table: ThetaTable) -> dict:
    raw = table.thetas
    errs = table.errs
    iso = table.isotonic()
    delta = np.abs(iso - raw)
    t1, capped = t1_estimate(table)
    a = table.alphas
    margins = []
    for i in range(len(a) - 1):
        if a[i + 1] <= a[i]:
            continue
        slope = (iso[i] - iso[i + 1]) / (a[i + 1] - a[i])
        mid = 0.5 * (a[i] + a[i + 1])
        bound = theta_derivative_bound(mid, table.d) if mid > 0 else 0.0
        slack = 2.0 * (errs[i] + errs[i + 1]) / (a[i + 1] - a[i])
        margins.append(
            {
                "interval": [float(a[i]), float(a[i + 1])],
                "slope": float(slope),
                "derivative_bound": float(bound),
                "margin_with_2err": float(slope + slack - bound),
            }
        )
    return {
        "isotonic_delta": delta.tolist(),
        "error_bars": errs.tolist(),
        "monotone_within_2err": bool(np.all(delta <= 2.0 * errs + 1e-15)),
        "t1_estimate": float(t1),
        "t1_capped": bool(capped),
        "derivative_bound_margins": margins,
    }


def _load_g(cfg: RunConfig) -> GFunction:
    spec = cfg.limit
    if spec.g_file is not None:
        return GFunction.from_json_dict(read_json(spec.g_file))
    return exact_oned_gfunction(spec.exact_oned_alpha)


def cmd_limit(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("limit", cfg, outdir)
    if cfg.limit is None:
        raise ConfigError("limit command needs a limit section")
    dom = cfg.domain
    cells = int(cfg.limit.grid_nodes) - 1
    h = tuple(e / cells for e in dom.extents)
    f = cfg.f.build(dom, h)
    g = _load_g(cfg)
    sol = solve_limit(f, g, dom)
    run.add("density.csv", lambda p: write_field_csv(p, sol.density.field))
    out = {
        "c": sol.c,
        "objective": sol.objective,
        "residuals": sol.residuals,
        "feasibility": sol.diagnostics,
        "g_alpha": g.alpha,
        "t_alpha": g.t_alpha if math.isfinite(g.t_alpha) else None,
    }
    run.add("limit.json", lambda p: write_json(p, out))
    print(
        f"c = {sol.c:.9g}  objective = {sol.objective:.9g}  "
        f"mass_error = {sol.residuals['mass_error']:.3e}  "
        f"inclusion = {sol.residuals['inclusion_violation']:.3e}"
    )
    return run.finish(out)


def _quantile_centers(density: DensityMeasure, n: int) -> np.ndarray:
    nodes = density.field.axes()[0]
    rho = density.field.values
    hcell = np.diff(nodes)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * hcell)])
    cdf /= cdf[-1]
    q = (np.arange(n) + 0.5) / n
    return np.interp(q, cdf, nodes).reshape(-1, 1)


def cmd_compare(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("compare", cfg, outdir)
    if cfg.compare is None or cfg.limit is None:
        raise ConfigError("compare needs both compare and limit sections")
    dom = cfg.domain
    d = cfg.dimension
    cells = int(cfg.limit.grid_nodes) - 1
    h_fine = tuple(e / cells for e in dom.extents)
    f_fine = cfg.f.build(dom, h_fine)
    if cfg.limit.exact_oned_alpha == 0.0 and d == 1:
        mu_star, inf_f = oned_limit_exact(f_fine)
    else:
        g = _load_g(cfg)
        sol = solve_limit(f_fine, g, dom)
        mu_star, inf_f = sol.density, sol.objective
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.compare.n_list))
    rows = []
    for n, seed in zip(cfg.compare.n_list, seeds):
        n = int(n)
        if d == 1:
            start_centers = _quantile_centers(mu_star, n)
        else:
            rng = np.random.default_rng(seed)
            start_centers = rng.random((n, d)) * np.asarray(dom.extents)
        start = BallConfig(dom, start_centers, cfg.alpha)
        r = start.radius
        h = cfg.spacing(r if r > 0 else None)
        f = cfg.f.build(dom, h)
        settings = OptimizerSettings(
            method=cfg.optimizer.method,
            initial_step=cfg.optimizer.initial_step,
            shrink=cfg.optimizer.shrink,
            max_iters=cfg.compare.opt_sweeps,
            tol=cfg.optimizer.tol,
            seed=int(seed.generate_state(1)[0]),
            restarts=0,
            solver_tol=cfg.optimizer.solver_tol,
        )
        trace = optimize(start, f, settings, h)
        em = empirical_measure(trace.final_config)
        if d == 1:
            dist = w1_atoms_vs_density(em.atoms[:, 0], mu_star)
            metric = "wasserstein1_cdf"
        else:
            nbins = max(2, int(round(n ** (1.0 / (d + 2)))))
            dist = histogram_l1(em.atoms, mu_star, nbins)
            metric = "histogram_l1"
        scaled = trace.final_scaled
        rows.append(
            (n, dist, metric, scaled, inf_f, scaled / inf_f if inf_f > 0 else math.inf)
        )
    run.add(
        "compare.csv",
        lambda p: write_table_csv(
            p,
            ["n", "distance", "metric", "scaled_value", "limit_objective", "ratio"],
            rows,
        ),
    )
    dists = [r[1] for r in rows]
    summary = {
        "n_list": [r[0] for r in rows],
        "distances": dists,
        "strictly_decreasing": bool(
            all(b < a for a, b in zip(dists, dists[1:]))
        ),
        "scaled_values": [r[3] for r in rows],
        "limit_objective": inf_f,
        "ratio_at_largest_n": rows[-1][5],
    }
    run.add("summary.json", lambda p: write_json(p, summary))
    return run.finish(summary)


def cmd_exact1d(cfg: RunConfig, outdir: str) -> dict:
    run = RunFolder("exact1d", cfg, outdir)
    if cfg.dimension != 1:
        raise ConfigError("exact1d is one-dimensional")
    dom = cfg.domain
    summary: dict = {}
    if cfg.theta is not None:
        rows = [(a, oned_theta_exact(a)) for a in cfg.theta.alphas]
        run.add(
            "exact_theta.csv",
            lambda p: write_table_csv(p, ["alpha", "theta"], rows),
        )
        summary["theta"] = {str(a): t for a, t in rows}
    nodes = cfg.limit.grid_nodes if cfg.limit is not None else 10001
    h = tuple(e / (int(nodes) - 1) for e in dom.extents)
    f = cfg.f.build(dom, h)
    density, objective = oned_limit_exact(f)
    run.add("density.csv", lambda p: write_field_csv(p, density.field))
    summary["objective"] = objective
    summary["normalisation"] = 1.0 / (12.0 * objective) ** (1.0 / 3.0)
    run.add("summary.json", lambda p: write_json(p, summary))
    print(f"objective = {objective:.9g}")
    return run.finish(summary)


COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "theta": cmd_theta,
    "limit": cmd_limit,
    "compare": cmd_compare,
    "exact1d": cmd_exact1d,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="comploc",
        description="compliance-optimal ball placement laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-path config override, value parsed as JSON",
        )
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text, args.config)
        obj = cfg.raw
        if args.override:
            obj = apply_overrides(obj, args.override)
        if args.seed is not None:
            obj = {**obj, "seed": args.seed}
        if args.threads is not None:
            obj = {**obj, "threads": args.threads}
        cfg = config_from_dict(obj)
        outdir = args.out if args.out is not None else cfg.output
        COMMANDS[args.command](cfg, outdir)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ComplocError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
