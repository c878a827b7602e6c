"""Box domains, uniform node grids and scalar fields on them.

Grids are vertex-centred: axis i carries ``shape[i]`` nodes at spacing
``h[i] = extents[i] / (shape[i] - 1)``, so the nodes span the box exactly.
All quadrature is trapezoidal (half weights on box faces, quarter on edges,
and so on), which matches the second-order stencil used by the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainMismatchError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


@dataclass(frozen=True)
class Domain:
    """Open box (0, L_1) x ... x (0, L_d) with an outer boundary condition tag."""

    extents: tuple[float, ...]
    outer: str = DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if not 1 <= len(self.extents) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(self.extents)}")
        if any(e <= 0 for e in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")
        if self.outer not in (DIRICHLET, NEUMANN):
            raise ValueError(f"unknown outer boundary tag {self.outer!r}")

    @property
    def d(self) -> int:
        return len(self.extents)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @classmethod
    def unit_cube(cls, d: int, outer: str = DIRICHLET) -> "Domain":
        return cls((1.0,) * d, outer)


def grid_shape(domain: Domain, h) -> tuple[int, ...]:
    """Node counts per axis for spacing ``h`` (scalar or per-axis).

    The spacing must divide each extent to within a relative 1e-9, so the
    nodes span the box exactly.
    """
    hs = np.broadcast_to(np.asarray(h, dtype=float), (domain.d,))
    if np.any(hs <= 0):
        raise ValueError(f"spacing must be positive, got {h}")
    cells = np.rint(np.asarray(domain.extents) / hs)
    if np.any(cells < 1) or np.any(
        np.abs(cells * hs - domain.extents) > 1e-9 * np.asarray(domain.extents)
    ):
        raise DomainMismatchError(
            f"spacing {h} does not divide extents {domain.extents} evenly"
        )
    return tuple(int(c) + 1 for c in cells)


@dataclass
class ScalarField:
    """Node values of a scalar function on the uniform grid of a Domain."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.domain.d:
            raise DomainMismatchError(
                f"values have ndim {self.values.ndim}, domain is {self.domain.d}-d"
            )
        if any(s < 2 for s in self.values.shape):
            raise DomainMismatchError("grid needs at least 2 nodes per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(
            e / (s - 1) for e, s in zip(self.domain.extents, self.values.shape)
        )

    def axes(self) -> list[np.ndarray]:
        """Per-axis node coordinate arrays."""
        return [
            np.linspace(0.0, e, s)
            for e, s in zip(self.domain.extents, self.values.shape)
        ]

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    @classmethod
    def zeros(cls, domain: Domain, h) -> "ScalarField":
        return cls(domain, np.zeros(grid_shape(domain, h)))

    @classmethod
    def constant(cls, domain: Domain, h, value: float) -> "ScalarField":
        return cls(domain, np.full(grid_shape(domain, h), float(value)))

    @classmethod
    def from_callable(cls, domain: Domain, h, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` (vectorised over meshgrid arrays) at the nodes."""
        shape = grid_shape(domain, h)
        axes = [np.linspace(0.0, e, s) for e, s in zip(domain.extents, shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        vals = np.asarray(fn(*grids), dtype=float)
        return cls(domain, np.broadcast_to(vals, shape).copy())

    def same_grid(self, other: "ScalarField") -> bool:
        return (
            self.domain.extents == other.domain.extents
            and self.values.shape == other.values.shape
        )


def trapezoid_weights(shape: tuple[int, ...]) -> np.ndarray:
    """Tensor-product trapezoid node weights (without the h^d volume factor)."""
    w = np.ones(shape)
    for ax in range(len(shape)):
        sl = [slice(None)] * len(shape)
        for edge in (0, -1):
            sl[ax] = edge
            w[tuple(sl)] *= 0.5
    return w


def integrate(field: ScalarField) -> float:
    """Trapezoid quadrature of the field over its box."""
    w = trapezoid_weights(field.shape)
    return float(np.sum(w * field.values) * np.prod(field.h))
