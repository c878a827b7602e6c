"""Admissible ball configurations and their generators.

A configuration is n closed balls of the common radius r = alpha * n**(-1/d)
with centres allowed anywhere in the r-neighbourhood of the box.  Overlapping
balls are allowed.  Generators cover the regular lattice, homogenised tilings
of a base cell and boundary coverings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Domain, ScalarField, integrate


@dataclass
class BallConfig:
    """n equal closed balls in (the neighbourhood of) a box domain."""

    domain: Domain
    centers: np.ndarray  # (n, d)
    alpha: float

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if self.centers.shape[1] != self.domain.d:
            raise ValueError(
                f"centers have {self.centers.shape[1]} coords, domain is "
                f"{self.domain.d}-d"
            )
        if self.centers.shape[0] < 1:
            raise ValueError("need at least one ball")
        self.alpha = float(self.alpha)
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def radius(self) -> float:
        return self.alpha * self.n ** (-1.0 / self.d)

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "alpha": self.alpha,
            "n": self.n,
            "extents": list(self.domain.extents),
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BallConfig":
        dom = Domain(tuple(obj["extents"]))
        cfg = cls(dom, np.asarray(obj["centers"], dtype=float), float(obj["alpha"]))
        if cfg.n != int(obj["n"]):
            raise ValueError("center count does not match recorded n")
        return cfg


@dataclass
class Verdict:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def admissible(config: BallConfig) -> Verdict:
    """Check the admissibility clauses; violations are named, not raised."""
    bad: list[str] = []
    r = config.radius
    lo = config.centers.min(axis=0)
    hi = config.centers.max(axis=0)
    ext = np.asarray(config.domain.extents)
    # r-neighbourhood of the box, with a hair of float slack
    tol = 1e-12 * max(1.0, float(ext.max()))
    if np.any(lo < -r - tol) or np.any(hi > ext + r + tol):
        bad.append("center outside the r-neighbourhood of the box")
    if not np.all(np.isfinite(config.centers)):
        bad.append("non-finite center coordinate")
    return Verdict(not bad, bad)


def project(point, domain: Domain) -> np.ndarray:
    """Componentwise clamp onto the closed box (nearest point, idempotent)."""
    p = np.asarray(point, dtype=float)
    return np.clip(p, 0.0, np.asarray(domain.extents))


def lattice_config(k: int, alpha: float, domain: Domain | None = None) -> BallConfig:
    """k^d balls at the cell midpoints of the regular k-partition of the box."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if domain is None:
        domain = Domain.unit_cube(2)
    mids = [(np.arange(k) + 0.5) * e / k for e in domain.extents]
    grids = np.meshgrid(*mids, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    return BallConfig(domain, centers, alpha)


def hex_config(n_target: int, alpha: float, domain: Domain | None = None) -> BallConfig:
    """Roughly n_target centres on a triangular (hexagonal-cell) lattice, d=2.

    Exploratory generator; n is whatever the clipped lattice yields, and alpha
    is kept so the radius follows r = alpha * n**(-1/2).
    """
    if domain is None:
        domain = Domain.unit_cube(2)
    if domain.d != 2:
        raise ValueError("hexagonal lattice is 2-d only")
    Lx, Ly = domain.extents
    # spacing so that density n/(Lx*Ly) matches the triangular lattice
    s = np.sqrt(2.0 * Lx * Ly / (np.sqrt(3.0) * n_target))
    rows = int(np.ceil(Ly / (s * np.sqrt(3.0) / 2.0)))
    pts = []
    for j in range(rows + 1):
        y = (j + 0.5) * s * np.sqrt(3.0) / 2.0
        if y >= Ly:
            continue
        off = 0.25 * s if j % 2 else 0.75 * s
        xs = np.arange(off, Lx, s)
        pts.extend((x, y) for x in xs)
    return BallConfig(domain, np.asarray(pts), alpha)


def homogenize(base: BallConfig, k: int, target: Domain | None = None) -> BallConfig:
    """Tile k^{-1}-scaled copies of a unit-cube base over the k^{-1} lattice.

    A translated ball is kept iff its closed support intersects the closed
    target box.  The common radius becomes base.radius / k and alpha is
    adjusted so r = alpha * n**(-1/d) stays exact.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if target is None:
        target = base.domain
    d = base.d
    if target.d != d:
        raise ValueError("target dimension mismatch")
    r_new = base.radius / k
    ext = np.asarray(target.extents)
    centers = []
    # candidate lattice offsets j/k per axis: copy support is
    # j/k + (min_c - r0)/k .. j/k + (max_c + r0)/k
    lo_c = base.centers.min(axis=0) - base.radius
    hi_c = base.centers.max(axis=0) + base.radius
    j_lo = np.floor(-hi_c).astype(int)
    j_hi = np.ceil(k * ext - lo_c).astype(int)
    ranges = [np.arange(j_lo[a], j_hi[a] + 1) for a in range(d)]
    grids = np.meshgrid(*ranges, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1) / k
    for off in offsets:
        cand = off + base.centers / k
        keep = np.all(cand + r_new >= -1e-12, axis=1) & np.all(
            cand - r_new <= ext + 1e-12, axis=1
        )
        if np.any(keep):
            centers.append(cand[keep])
    # adjacent copies of a boundary-covering base share their face balls
    # exactly; coincident closed balls are one ball
    all_centers = np.unique(np.concatenate(centers, axis=0), axis=0)
    n = all_centers.shape[0]
    alpha_new = r_new * n ** (1.0 / d)
    return BallConfig(target, all_centers, alpha_new)


def _face_cover_points(extents, axis: int, side: float, spacing: float) -> np.ndarray:
    """Regular lattice on one box face with spacing <= the requested one."""
    d = len(extents)
    other = [a for a in range(d) if a != axis]
    axes_pts = []
    for a in other:
        m = max(1, int(np.ceil(extents[a] / spacing)))
        axes_pts.append(np.linspace(0.0, extents[a], m + 1))
    if other:
        grids = np.meshgrid(*axes_pts, indexing="ij")
        flat = [g.ravel() for g in grids]
    else:
        flat = []
    npts = flat[0].size if flat else 1
    pts = np.empty((npts, d))
    pts[:, axis] = side
    for a, vals in zip(other, flat):
        pts[:, a] = vals
    return pts


def boundary_cover(config: BallConfig) -> BallConfig:
    """Append same-radius balls whose union covers the box boundary.

    Faces are covered by regular surface lattices of spacing
    r * sqrt(2/(d-1)) (the two endpoints for d=1); the circumradius of a face
    cell is then at most r/sqrt(2) < r so closed balls cover each face.  The
    radius is kept fixed, so the returned config carries
    alpha' = alpha * (n'/n)**(1/d).
    """
    d = config.d
    r = config.radius
    if r <= 0:
        raise ValueError("boundary cover needs a positive radius")
    ext = config.domain.extents
    pts = []
    if d == 1:
        pts.append(np.array([[0.0], [ext[0]]]))
    else:
        spacing = r * np.sqrt(2.0 / (d - 1))
        for axis in range(d):
            for side in (0.0, ext[axis]):
                pts.append(_face_cover_points(ext, axis, side, spacing))
    # linspace endpoints are exact, so shared corners/edges dedupe exactly
    cover = np.unique(np.concatenate(pts, axis=0), axis=0)
    all_centers = np.concatenate([config.centers, cover], axis=0)
    n_new = all_centers.shape[0]
    alpha_new = r * n_new ** (1.0 / d)
    return BallConfig(config.domain, all_centers, alpha_new)


def covers_boundary(config: BallConfig, samples_per_face: int = 4000) -> bool:
    """Dense-sampling check that the balls cover the box boundary."""
    d = config.d
    r = config.radius
    rng = np.random.default_rng(0)
    pts = []
    if d == 1:
        pts.append(np.array([[0.0], [config.domain.extents[0]]]))
    else:
        for axis in range(d):
            for side in (0.0, config.domain.extents[axis]):
                q = rng.random((samples_per_face, d)) * np.asarray(
                    config.domain.extents
                )
                q[:, axis] = side
                pts.append(q)
    bpts = np.concatenate(pts, axis=0)
    # chunked min-distance to centres
    for chunk in np.array_split(bpts, max(1, bpts.shape[0] // 2048)):
        d2 = np.min(
            np.sum((chunk[:, None, :] - config.centers[None, :, :]) ** 2, axis=2),
            axis=1,
        )
        if np.any(d2 > (r * (1 + 1e-9)) ** 2):
            return False
    return True


@dataclass
class EmpiricalMeasure:
    """Uniform atomic measure on the projected ball centres."""

    atoms: np.ndarray  # (n, d), inside the closed box
    domain: Domain
    histogram: np.ndarray | None = None  # density values, integrates to 1
    bin_edges: list[np.ndarray] | None = None

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def empirical_measure(config: BallConfig, bins=None) -> EmpiricalMeasure:
    """Project centres onto the box; optionally bin them to a density histogram.

    Internal bin faces assign to the lower-index bin; the first bin keeps its
    left edge, so the bins partition the closed box.
    """
    atoms = project(config.centers, config.domain)
    hist = None
    edges_out = None
    if bins is not None:
        if np.isscalar(bins):
            bins = (int(bins),) * config.d
        edges_out = [
            np.linspace(0.0, e, b + 1) for e, b in zip(config.domain.extents, bins)
        ]
        counts = np.zeros(tuple(bins))
        idx = []
        for a, edges in enumerate(edges_out):
            # (e_{i-1}, e_i] bins, first bin closed at 0
            j = np.digitize(atoms[:, a], edges, right=True) - 1
            idx.append(np.clip(j, 0, len(edges) - 2))
        np.add.at(counts, tuple(idx), 1.0)
        binvol = np.prod([e[1] - e[0] for e in edges_out])
        hist = counts / (config.n * binvol)
    return EmpiricalMeasure(atoms, config.domain, hist, edges_out)


def cell_constant(base: BallConfig, h) -> float:
    """Integral of the unit-load solution on the base cell.

    The base must cover the boundary of its box (checked by dense sampling),
    which is what decouples a tiled copy from its neighbours.
    """
    from .poisson import rasterize, solve_poisson

    if not covers_boundary(base):
        raise ValueError("base configuration does not cover the box boundary")
    dom = base.domain
    mask = rasterize(base, dom, h)
    f = ScalarField.constant(dom, h, 1.0)
    u, _ = solve_poisson(dom, mask, f)
    return integrate(u)
