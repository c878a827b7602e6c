"""Optimisation of ball centres for the finite-n compliance problem.

The objective is piecewise constant in the centres at the grid scale
(rasterisation only changes when a node crosses a sphere), so the default
outer loop is a derivative-free pattern search; a surface-flux shape gradient
is available for fine grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .balls import BallConfig, admissible
from .grids import Domain, ScalarField, grid_shape
from .poisson import _ball_flux, compliance, rasterize, solve_poisson


@dataclass
class OptimizerSettings:
    method: str = "pattern-search"  # pattern-search | shape-gradient | hybrid
    initial_step: float = 0.25  # fraction of n**(-1/d) * max extent
    shrink: float = 0.5
    max_iters: int = 60  # full sweeps / gradient steps
    tol: float = 1e-4  # relative compliance decrease per sweep
    seed: int = 0
    restarts: int = 0
    solver_tol: float = 1e-8
    flux_samples: int = 64

    def __post_init__(self):
        if self.initial_step <= 0:
            raise ValueError("initial step must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.method not in ("pattern-search", "shape-gradient", "hybrid"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class TraceRecord:
    iteration: int
    config_id: int
    compliance: float
    scaled_compliance: float
    step: float


@dataclass
class OptimizationTrace:
    records: list[TraceRecord]
    configs: list[np.ndarray]  # centre snapshots, indexed by config_id
    final_config: BallConfig
    final_compliance: float
    final_scaled: float
    converged: bool
    n_solves: int
    restart_values: list[float] = field(default_factory=list)


def _objective(centers, alpha, domain, f, h, tol):
    cfg = BallConfig(domain, centers, alpha)
    mask = rasterize(cfg, domain, h)
    u, _ = solve_poisson(domain, mask, f, tol=tol)
    return compliance(u, f), u


def scaled_compliance(
    config: BallConfig, f: ScalarField, h, solver_tol: float = 1e-8
) -> float:
    """n**(2/d) * compliance for admissible configs, +inf otherwise."""
    if not admissible(config):
        return math.inf
    val, _ = _objective(
        config.centers, config.alpha, config.domain, f, h, solver_tol
    )
    return config.n ** (2.0 / config.d) * val


def translation_gradient(
    config: BallConfig, u: ScalarField, samples_per_ball: int | None = None
) -> np.ndarray:
    """Per-ball descent direction for centre translations.

    Hadamard boundary integral: moving ball i by a velocity t changes the
    compliance by -sum over the sphere of |du/dn|^2 (t . nu) dS with nu the
    ball-outward normal, so the steepest-descent direction is the flux-square
    weighted average of nu.  Returns an (n, d) array.
    """
    d = config.d
    m = samples_per_ball if samples_per_ball is not None else max(8 * d, 64)
    if d == 1:
        m = 2
    fluxes = _ball_flux(u, config, m)
    r = config.radius
    if d == 1:
        area_per_sample = 1.0  # counting measure on the two endpoints
    elif d == 2:
        area_per_sample = 2.0 * np.pi * r / m
    else:
        area_per_sample = 4.0 * np.pi * r * r / m
    out = np.zeros_like(config.centers)
    for i, (nu, _, flux) in enumerate(fluxes):
        if nu.shape[0] == 0:
            continue
        out[i] = area_per_sample * np.sum(flux[:, None] ** 2 * nu, axis=0)
    return out


def _clip_centers(centers, domain: Domain, r: float) -> np.ndarray:
    ext = np.asarray(domain.extents)
    return np.clip(centers, -r, ext + r)


def _pattern_search(centers, alpha, domain, f, h, settings, records, snaps, counters):
    d = domain.d
    n = centers.shape[0]
    r = alpha * n ** (-1.0 / d)
    hmin = min(
        e / (s - 1) for e, s in zip(domain.extents, grid_shape(domain, h))
    )
    step = settings.initial_step * n ** (-1.0 / d) * max(domain.extents)
    val, _ = _objective(centers, alpha, domain, f, h, settings.solver_tol)
    counters["solves"] += 1
    snaps.append(centers.copy())
    records.append(
        TraceRecord(0, len(snaps) - 1, val, n ** (2.0 / d) * val, step)
    )
    converged = False
    for sweep in range(1, settings.max_iters + 1):
        val_start = val
        improved = False
        for i in range(n):
            for axis in range(d):
                for sign in (1.0, -1.0):
                    trial = centers.copy()
                    trial[i, axis] += sign * step
                    trial = _clip_centers(trial, domain, r)
                    tval, _ = _objective(
                        trial, alpha, domain, f, h, settings.solver_tol
                    )
                    counters["solves"] += 1
                    if tval < val:
                        centers, val = trial, tval
                        improved = True
                        snaps.append(centers.copy())
                        records.append(
                            TraceRecord(
                                sweep,
                                len(snaps) - 1,
                                val,
                                n ** (2.0 / d) * val,
                                step,
                            )
                        )
                        break  # keep the incumbent direction greedy
        rel = (val_start - val) / val_start if val_start > 0 else 0.0
        if not improved:
            step *= settings.shrink
        if rel < settings.tol and step < hmin:
            converged = True
            break
    return centers, val, converged


def _gradient_descent(centers, alpha, domain, f, h, settings, records, snaps, counters):
    d = domain.d
    n = centers.shape[0]
    r = alpha * n ** (-1.0 / d)
    hmin = min(
        e / (s - 1) for e, s in zip(domain.extents, grid_shape(domain, h))
    )
    step = settings.initial_step * n ** (-1.0 / d) * max(domain.extents)
    val, u = _objective(centers, alpha, domain, f, h, settings.solver_tol)
    counters["solves"] += 1
    snaps.append(centers.copy())
    records.append(TraceRecord(0, len(snaps) - 1, val, n ** (2.0 / d) * val, step))
    converged = False
    for it in range(1, settings.max_iters + 1):
        g = translation_gradient(
            BallConfig(domain, centers, alpha), u, settings.flux_samples
        )
        gmax = float(np.max(np.linalg.norm(g, axis=1)))
        if gmax == 0.0:
            converged = True
            break
        direction = g / gmax
        accepted = False
        while step >= hmin * 0.5:
            trial = _clip_centers(centers + step * direction, domain, r)
            tval, tu = _objective(trial, alpha, domain, f, h, settings.solver_tol)
            counters["solves"] += 1
            if tval < val:
                rel = (val - tval) / val if val > 0 else 0.0
                centers, val, u = trial, tval, tu
                accepted = True
                snaps.append(centers.copy())
                records.append(
                    TraceRecord(it, len(snaps) - 1, val, n ** (2.0 / d) * val, step)
                )
                step = min(step * 1.5, settings.initial_step * max(domain.extents))
                if rel < settings.tol and step < hmin:
                    converged = True
                break
            step *= settings.shrink
        if not accepted and step < hmin * 0.5:
            converged = True
            break
        if converged:
            break
    return centers, val, converged


def optimize(
    config0: BallConfig, f: ScalarField, settings: OptimizerSettings, h
) -> OptimizationTrace:
    """Minimise compliance over centre positions from config0 (plus restarts).

    Restarts draw independent uniform starts in the box; the best run is
    kept and its accepted-iterate record is the returned trace.  The whole
    trajectory is a deterministic function of the settings seed.
    """
    verdict = admissible(config0)
    if not verdict:
        raise ValueError(f"starting config is not admissible: {verdict.violations}")
    domain, alpha = config0.domain, config0.alpha
    n = config0.n
    starts = [config0.centers.copy()]
    if settings.restarts > 0:
        seeds = np.random.SeedSequence(settings.seed).spawn(settings.restarts)
        for s in seeds:
            rng = np.random.default_rng(s)
            starts.append(rng.random((n, domain.d)) * np.asarray(domain.extents))
    runner = {
        "pattern-search": _pattern_search,
        "shape-gradient": _gradient_descent,
        "hybrid": _hybrid,
    }[settings.method]
    best = None
    restart_values = []
    for start in starts:
        records: list[TraceRecord] = []
        snaps: list[np.ndarray] = []
        counters = {"solves": 0}
        centers, val, converged = runner(
            start, alpha, domain, f, h, settings, records, snaps, counters
        )
        restart_values.append(val)
        if best is None or val < best[1]:
            best = (centers, val, converged, records, snaps, counters["solves"])
    centers, val, converged, records, snaps, nsolve = best
    final = BallConfig(domain, centers, alpha)
    return OptimizationTrace(
        records=records,
        configs=snaps,
        final_config=final,
        final_compliance=val,
        final_scaled=n ** (2.0 / domain.d) * val,
        converged=converged,
        n_solves=nsolve,
        restart_values=restart_values,
    )


def _hybrid(centers, alpha, domain, f, h, settings, records, snaps, counters):
    sub = OptimizerSettings(
        method="shape-gradient",
        initial_step=settings.initial_step,
        shrink=settings.shrink,
        max_iters=max(1, settings.max_iters // 2),
        tol=settings.tol,
        seed=settings.seed,
        solver_tol=settings.solver_tol,
        flux_samples=settings.flux_samples,
    )
    centers, val, _ = _gradient_descent(
        centers, alpha, domain, f, h, sub, records, snaps, counters
    )
    sub2 = OptimizerSettings(
        method="pattern-search",
        initial_step=settings.initial_step / 4.0,
        shrink=settings.shrink,
        max_iters=settings.max_iters,
        tol=settings.tol,
        seed=settings.seed,
        solver_tol=settings.solver_tol,
    )
    return _pattern_search(
        centers, alpha, domain, f, h, sub2, records, snaps, counters
    )
