"""Benchmark functions for mixed continuous, integer and categorical search spaces.

Every categorical argument is the 0-based active category per dimension, so
"first category" means ``c == 0`` and "last category" means ``c == K - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .space import ObjectiveFunction, SearchSpace


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    n_co: int
    n_in: int
    n_ca: int = 0
    category_count: int = 5
    integer_levels: Tuple[float, ...] = tuple(range(-3, 4))
    x_scale: float = 3.0
    z_scale: float = 3.0
    continuous_bounds: Optional[Tuple[float, float]] = None
    reference_point: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.name not in REGISTRY:
            raise KeyError(f"unknown benchmark {self.name!r}; known: {sorted(REGISTRY)}")
        if min(self.n_co, self.n_in, self.n_ca) < 0:
            raise ValueError("dimension counts must be non-negative")
        if self.x_scale <= 0 or self.z_scale <= 0:
            raise ValueError("scale constants must be positive")
        if self.n_ca and self.category_count < 2:
            raise ValueError("category_count must be at least 2")
        object.__setattr__(self, "integer_levels", tuple(float(z) for z in self.integer_levels))

    @property
    def arity(self) -> int:
        return REGISTRY[self.name][1]

    def space(self) -> SearchSpace:
        bounds = None
        if self.continuous_bounds is not None:
            bounds = tuple([tuple(self.continuous_bounds)] * self.n_co)
        return SearchSpace(
            n_co=self.n_co,
            integer_domains=tuple([self.integer_levels] * self.n_in),
            category_counts=tuple([self.category_count] * self.n_ca),
            continuous_bounds=bounds,
        ).check()


def _ellipsoid_exponents(n_co: int, n_in: int) -> np.ndarray:
    n = n_co + n_in
    if n <= 1:
        return np.zeros(n)
    return 10.0 ** (6.0 * np.arange(n) / (n - 1))


def _leading_firsts(c: np.ndarray) -> int:
    count = 0
    for v in c.tolist():
        if v != 0:
            break
        count += 1
    return count


def _trailing_lasts(c: np.ndarray, k: int) -> int:
    count = 0
    for v in reversed(c.tolist()):
        if v != k - 1:
            break
        count += 1
    return count


def _sphere_int_com(spec: BenchmarkSpec):
    def f(x, z, c):
        return float(x @ x + z @ z + spec.n_ca - np.sum(c == 0))

    return f


def _ellipsoid_int_clo(spec: BenchmarkSpec, reversed_: bool = False):
    coef = _ellipsoid_exponents(spec.n_co, spec.n_in)
    if reversed_:
        cx, cz = coef[spec.n_in :], coef[: spec.n_in]
    else:
        cx, cz = coef[: spec.n_co], coef[spec.n_co :]

    def f(x, z, c):
        return float(cx @ (x * x) + cz @ (z * z) + spec.n_ca - _leading_firsts(c))

    return f


def _mv_proximity(spec: BenchmarkSpec):
    if not spec.n_co == spec.n_in == spec.n_ca:
        raise ValueError("MVProximity needs n_co == n_in == n_ca")

    def f(x, z, c):
        zeta = c / spec.category_count
        return float(
            np.sum((x / spec.x_scale - zeta) ** 2)
            + np.sum((z / spec.z_scale - zeta) ** 2)
            + zeta.sum()
        )

    return f


def _ds_int_lftl(spec: BenchmarkSpec):
    # empty variable groups contribute nothing
    wx = 1.0 / spec.n_co if spec.n_co else 0.0
    wz = 1.0 / spec.n_in if spec.n_in else 0.0

    def f(x, z, c):
        xs, zs = x / spec.x_scale, z / spec.z_scale
        f1 = wx * float(xs @ xs) + wz * float(zs @ zs)
        f2 = wx * float((xs - 1) @ (xs - 1)) + wz * float((zs - 1) @ (zs - 1))
        if spec.n_ca:
            f1 += (spec.n_ca - _leading_firsts(c)) / spec.n_ca
            f2 += (spec.n_ca - _trailing_lasts(c, spec.category_count)) / spec.n_ca
        return np.array([f1, f2])

    return f


REGISTRY: Dict[str, Tuple[Callable, int]] = {
    "SphereIntCOM": (_sphere_int_com, 1),
    "EllipsoidIntCLO": (_ellipsoid_int_clo, 1),
    "REllipsoidIntCLO": (lambda s: _ellipsoid_int_clo(s, reversed_=True), 1),
    "MVProximity": (_mv_proximity, 1),
    # the mixed-integer ellipsoids ignore any categorical part
    "EllipsoidInt": (_ellipsoid_int_clo, 1),
    "REllipsoidInt": (lambda s: _ellipsoid_int_clo(s, reversed_=True), 1),
    "DSIntLFTL": (_ds_int_lftl, 2),
}

_GEOMETRY = {
    "EllipsoidInt": dict(integer_levels=tuple(range(-10, 11)), n_ca=0),
    "REllipsoidInt": dict(integer_levels=tuple(range(-10, 11)), n_ca=0),
    "DSIntLFTL": dict(
        integer_levels=tuple(range(-5, 16)),
        x_scale=10.0,
        z_scale=10.0,
        continuous_bounds=(-5.0, 15.0),
        reference_point=(5.0, 5.0),
    ),
}


def default_spec(name: str, n_co: int, n_in: int, n_ca: int = 0, **overrides) -> BenchmarkSpec:
    """Spec with the customary domain, category count and scales for ``name``."""
    if name not in REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}; known: {sorted(REGISTRY)}")
    kwargs = dict(n_co=n_co, n_in=n_in, n_ca=n_ca)
    kwargs.update(_GEOMETRY.get(name, {}))
    if name in ("EllipsoidInt", "REllipsoidInt") and n_ca:
        raise ValueError(f"{name} has no categorical variables")
    kwargs.update(overrides)
    return BenchmarkSpec(name=name, **kwargs)


def make(spec: BenchmarkSpec) -> ObjectiveFunction:
    builder, arity = REGISTRY[spec.name]
    return ObjectiveFunction(spec.space(), builder(spec), arity, spec.name)


def make_single(name: str, spec: BenchmarkSpec) -> ObjectiveFunction:
    if spec.name != name:
        spec = replace(spec, name=name)
    if spec.arity != 1:
        raise ValueError(f"{name} is not single-objective")
    return make(spec)


def make_bi(name: str, spec: BenchmarkSpec) -> ObjectiveFunction:
    if spec.name != name:
        spec = replace(spec, name=name)
    if spec.arity != 2:
        raise ValueError(f"{name} is not bi-objective")
    return make(spec)


def optimum_of(name: str, spec: Optional[BenchmarkSpec] = None) -> Optional[float]:
    """Known optimal value, or ``None`` where no single optimum exists."""
    if name not in REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}")
    return 0.0 if REGISTRY[name][1] == 1 else None
