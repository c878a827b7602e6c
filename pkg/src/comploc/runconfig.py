"""Run configuration: strict JSON parsing, load specs, dotted overrides.

A run is described by a single JSON document; unknown keys anywhere are
rejected so typos fail loudly.  The load f is restricted to a whitelist of
deterministic forms (constant, univariate polynomial, Gaussian bumps,
gridded CSV) rather than a parsed expression language.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grids import DIRICHLET, NEUMANN, Domain, ScalarField
from .placement import OptimizerSettings
from .theta import ResolutionRule


def _take(obj: dict, context: str, known: dict):
    """Pop known keys with defaults; reject anything left over."""
    out = {}
    obj = dict(obj)
    for key, default in known.items():
        out[key] = obj.pop(key, default)
    if obj:
        raise ConfigError(f"unknown key(s) in {context}: {sorted(obj)}")
    return out


@dataclass
class FSpec:
    kind: str
    params: dict

    def build(self, domain: Domain, h) -> ScalarField:
        if self.kind == "constant":
            return ScalarField.constant(domain, h, self.params["value"])
        if self.kind == "polynomial":
            coeffs = self.params["coeffs"]
            axis = self.params["axis"]

            def poly(*coords):
                x = coords[axis]
                out = np.zeros_like(x)
                for p, c in enumerate(coeffs):
                    out = out + c * x**p
                return out

            return ScalarField.from_callable(domain, h, poly)
        if self.kind == "gaussians":
            bumps = self.params["bumps"]
            base = self.params["baseline"]

            def gsum(*coords):
                out = np.full_like(coords[0], float(base))
                for b in bumps:
                    c = b["center"]
                    s = b["sigma"]
                    a = b["amplitude"]
                    q = sum((x - ci) ** 2 for x, ci in zip(coords, c))
                    out = out + a * np.exp(-q / (2.0 * s * s))
                return out

            return ScalarField.from_callable(domain, h, gsum)
        if self.kind == "csv":
            from .files import read_field_csv

            f = read_field_csv(self.params["path"])
            if f.domain.extents != domain.extents:
                raise ConfigError(
                    f"gridded f extents {f.domain.extents} do not match the "
                    f"domain {domain.extents}"
                )
            return f
        raise ConfigError(f"unknown f kind {self.kind!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "FSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ConfigError("f must be an object with a 'kind'")
        kind = obj["kind"]
        if kind == "constant":
            p = _take(obj, "f", {"kind": None, "value": None})
            if not isinstance(p["value"], (int, float)):
                raise ConfigError("f.value must be a number")
        elif kind == "polynomial":
            p = _take(obj, "f", {"kind": None, "coeffs": None, "axis": 0})
            if not isinstance(p["coeffs"], list) or not p["coeffs"]:
                raise ConfigError("f.coeffs must be a nonempty list")
        elif kind == "gaussians":
            p = _take(obj, "f", {"kind": None, "bumps": None, "baseline": 0.0})
            if not isinstance(p["bumps"], list):
                raise ConfigError("f.bumps must be a list")
            p["bumps"] = [
                _take(b, "f.bumps[]", {"center": None, "sigma": None,
                                       "amplitude": None})
                for b in p["bumps"]
            ]
        elif kind == "csv":
            p = _take(obj, "f", {"kind": None, "path": None})
        else:
            raise ConfigError(f"unknown f kind {kind!r}")
        p.pop("kind")
        return cls(kind, p)


@dataclass
class BallSpec:
    generator: str | None = None  # lattice | hex
    k: int | None = None
    centers: list | None = None
    random_n: int | None = None

    @classmethod
    def from_dict(cls, obj) -> "BallSpec | None":
        if obj is None:
            return None
        p = _take(obj, "balls", {"generator": None, "k": None, "centers": None,
                                 "random_n": None})
        modes = sum(x is not None for x in (p["generator"], p["centers"],
                                            p["random_n"]))
        if modes != 1:
            raise ConfigError(
                "balls needs exactly one of generator/centers/random_n"
            )
        if p["generator"] is not None and p["k"] is None:
            raise ConfigError("balls.generator needs k")
        return cls(**p)


@dataclass
class ThetaSpec:
    alphas: list
    k_list: list
    families: tuple = ("lattice",)
    g_alpha: float | None = None
    g_x_grid: dict = field(default_factory=lambda: {"lo": 1e-3, "hi": 64.0,
                                                    "points": 600})
    opt_budget: int = 3
    opt_n_cap: int = 64

    @classmethod
    def from_dict(cls, obj) -> "ThetaSpec | None":
        if obj is None:
            return None
        p = _take(obj, "theta", {
            "alphas": None, "k_list": None, "families": ["lattice"],
            "g_alpha": None,
            "g_x_grid": {"lo": 1e-3, "hi": 64.0, "points": 600},
            "opt_budget": 3, "opt_n_cap": 64,
        })
        if not p["alphas"]:
            raise ConfigError("theta.alphas must be nonempty")
        if not p["k_list"]:
            raise ConfigError("theta.k_list must be nonempty")
        p["g_x_grid"] = _take(p["g_x_grid"], "theta.g_x_grid",
                              {"lo": 1e-3, "hi": 64.0, "points": 600})
        p["families"] = tuple(p["families"])
        return cls(**p)


@dataclass
class LimitSpec:
    g_file: str | None = None
    exact_oned_alpha: float | None = None
    grid_nodes: int = 10001

    @classmethod
    def from_dict(cls, obj) -> "LimitSpec | None":
        if obj is None:
            return None
        p = _take(obj, "limit", {"g_file": None, "exact_oned_alpha": None,
                                 "grid_nodes": 10001})
        if (p["g_file"] is None) == (p["exact_oned_alpha"] is None):
            raise ConfigError(
                "limit needs exactly one of g_file / exact_oned_alpha"
            )
        return cls(**p)


@dataclass
class CompareSpec:
    n_list: list
    opt_sweeps: int = 8

    @classmethod
    def from_dict(cls, obj) -> "CompareSpec | None":
        if obj is None:
            return None
        p = _take(obj, "compare", {"n_list": None, "opt_sweeps": 8})
        if not p["n_list"] or sorted(p["n_list"]) != list(p["n_list"]):
            raise ConfigError("compare.n_list must be a nonempty increasing list")
        return cls(**p)


@dataclass
class RunConfig:
    dimension: int
    extents: tuple
    outer: str
    f: FSpec
    alpha: float
    balls: BallSpec | None
    resolution: dict  # ratio / h_cap / max_nodes / h
    optimizer: OptimizerSettings
    theta: ThetaSpec | None
    limit: LimitSpec | None
    compare: CompareSpec | None
    output: str
    seed: int
    threads: int
    raw: dict

    @property
    def domain(self) -> Domain:
        return Domain(self.extents, self.outer)

    def resolution_rule(self) -> ResolutionRule:
        return ResolutionRule(
            ratio=self.resolution["ratio"],
            h_cap=self.resolution["h_cap"],
            max_nodes=self.resolution["max_nodes"],
        )

    def spacing(self, radius: float | None) -> float:
        """Grid spacing for direct solves: explicit h, or ratio-driven."""
        res = self.resolution
        ext = max(self.extents)
        if res["h"] is not None:
            return float(res["h"])
        if radius is None or radius <= 0:
            raise ConfigError(
                "resolution.h is required when no positive ball radius "
                "fixes a scale"
            )
        cells = int(np.ceil(ext * res["ratio"] / radius))
        return ext / cells


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(obj)


def config_from_dict(obj: dict) -> RunConfig:
    p = _take(obj, "config", {
        "dimension": None, "extents": None, "outer": DIRICHLET, "f": None,
        "alpha": 0.0, "balls": None, "resolution": {}, "optimizer": {},
        "theta": None, "limit": None, "compare": None,
        "output": "runs/out", "seed": 0, "threads": 1,
    })
    d = p["dimension"]
    if d not in (1, 2, 3):
        raise ConfigError("dimension must be 1, 2 or 3")
    extents = tuple(p["extents"]) if p["extents"] else (1.0,) * d
    if len(extents) != d or any(e <= 0 for e in extents):
        raise ConfigError("extents must be d positive numbers")
    if p["outer"] not in (DIRICHLET, NEUMANN):
        raise ConfigError("outer must be dirichlet or neumann")
    if p["f"] is None:
        raise ConfigError("config needs an f specification")
    res = _take(p["resolution"], "resolution", {
        "ratio": 8.0, "h_cap": None, "max_nodes": 8_000_000, "h": None,
    })
    opt = _take(p["optimizer"], "optimizer", {
        "method": "pattern-search", "initial_step": 0.25, "shrink": 0.5,
        "max_iters": 60, "tol": 1e-4, "restarts": 0, "solver_tol": 1e-8,
    })
    try:
        settings = OptimizerSettings(seed=int(p["seed"]), **opt)
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from exc
    return RunConfig(
        dimension=d,
        extents=extents,
        outer=p["outer"],
        f=FSpec.from_dict(p["f"]),
        alpha=float(p["alpha"]),
        balls=BallSpec.from_dict(p["balls"]),
        resolution=res,
        optimizer=settings,
        theta=ThetaSpec.from_dict(p["theta"]),
        limit=LimitSpec.from_dict(p["limit"]),
        compare=CompareSpec.from_dict(p["compare"]),
        output=str(p["output"]),
        seed=int(p["seed"]),
        threads=int(p["threads"]),
        raw=obj,
    )


def apply_overrides(obj: dict, overrides: list[str]) -> dict:
    """Dotted-path KEY=VALUE overrides; values parse as JSON, else strings."""
    out = json.loads(json.dumps(obj))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out
