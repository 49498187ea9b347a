"""Truncated cell-centred grids, grid functions and quadrature functionals.

Two layouts exist. ``full_line`` covers ``[-R, R]`` in one dimension. ``radial``
covers ``(0, R]`` for radially symmetric functions in any dimension; its weights
carry the spherical measure ``ω_d r^{d-1} dr`` (``ω_1 = 2`` folds both half-lines).
Grid functions vanish identically outside the truncation radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, DomainMismatch

FULL_LINE = "full_line"
RADIAL = "radial"
MODES = (FULL_LINE, RADIAL)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Domain:
    mode: str
    d: int
    R: float
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def h(self) -> float:
        return (2.0 * self.R if self.mode == FULL_LINE else self.R) / self.n

    @property
    def radii(self) -> np.ndarray:
        return np.abs(self.nodes)

    def key(self) -> tuple:
        return (self.mode, self.d, float(self.R), int(self.n))

    def same_as(self, other: "Domain") -> bool:
        return self is other or self.key() == other.key()

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n))

    def field(self, values) -> "Field":
        return Field(self, values)


def build_domain(mode: str, d: int, R: float, n: int, *, min_nodes: int = 16) -> Domain:
    if mode not in MODES:
        raise ConfigError(f"unknown grid mode {mode!r}")
    if mode == FULL_LINE and d != 1:
        raise ConfigError("full_line mode requires d = 1")
    if int(d) != d or d < 1:
        raise ConfigError(f"d must be a positive integer, got {d!r}")
    if not R > 0:
        raise ConfigError(f"truncation radius must be positive, got {R!r}")
    if int(n) != n or n < max(min_nodes, 1):
        raise ConfigError(f"need at least {min_nodes} nodes, got {n!r}")
    n = int(n)
    if mode == FULL_LINE:
        h = 2.0 * R / n
        nodes = -R + (np.arange(n) + 0.5) * h
        weights = np.full(n, h)
    else:
        h = R / n
        nodes = (np.arange(n) + 0.5) * h
        weights = sphere_area(d) * nodes ** (d - 1) * h
    return Domain(mode, int(d), float(R), n, _frozen(nodes), _frozen(weights))


@dataclass(frozen=True, eq=False)
class Field:
    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.domain.n,):
            raise DomainMismatch(f"expected {self.domain.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    def with_values(self, values) -> "Field":
        return Field(self.domain, values)

    def __neg__(self):
        return self.with_values(-self.values)

    def __sub__(self, other: "Field"):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __add__(self, other: "Field"):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __mul__(self, c: float):
        return self.with_values(c * self.values)

    __rmul__ = __mul__

    def abs(self) -> "Field":
        return self.with_values(np.abs(self.values))


def _check_same(f: Field, g: Field):
    if not f.domain.same_as(g.domain):
        raise DomainMismatch("fields live on different domains")


def mass(f: Field) -> float:
    return float(np.dot(f.domain.weights, f.values))


def lq_norm(f: Field, q: float) -> float:
    if q == math.inf:
        return float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if not q >= 1.0:
        raise DomainError(f"L^q norm needs q >= 1, got {q}")
    return float(np.dot(f.domain.weights, np.abs(f.values) ** q) ** (1.0 / q))


def positive_part_integral(f: Field, g: Field) -> float:
    _check_same(f, g)
    return float(np.dot(f.domain.weights, np.maximum(f.values - g.values, 0.0)))


def origin_value(f: Field) -> float:
    """Value at r = 0 of a radial field, by even quadratic extrapolation from the
    first two cell centres. Full-line fields return the value nearest the origin."""
    v = f.values
    if f.domain.mode == RADIAL:
        return float((9.0 * v[0] - v[1]) / 8.0)
    return float(v[np.argmin(np.abs(f.domain.nodes))])


# --------------------------------------------------------------------------
# Initial data. Profiles are cell averages so discrete mass matches the
# continuum mass of the datum.

def _cell_average(domain: Domain, func, sub: int = 16) -> np.ndarray:
    h = domain.h
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    pts = domain.nodes[:, None] + h * offs[None, :]
    if domain.mode == RADIAL:
        r = np.abs(pts)
        wts = r ** (domain.d - 1)
        return np.sum(func(r) * wts, axis=1) / np.sum(wts, axis=1)
    return np.mean(func(pts), axis=1)


def box(domain: Domain, height: float = 1.0, lo: float = -1.0, hi: float = 1.0) -> Field:
    """Indicator of ``[lo, hi]`` (full line) or of the ball of radius ``hi`` (radial)."""
    h = domain.h
    if domain.mode == RADIAL:
        d = domain.d
        a = domain.nodes - h / 2
        b = domain.nodes + h / 2
        c = np.clip(hi, a, b)
        return Field(domain, height * (c**d - a**d) / (b**d - a**d))
    left = np.clip(domain.nodes - h / 2, lo, hi)
    right = np.clip(domain.nodes + h / 2, lo, hi)
    return Field(domain, height * (right - left) / h)


def box_of_mass(domain: Domain, total: float, radius: float = 1.0, center: float = 0.0) -> Field:
    if domain.mode == RADIAL:
        f = box(domain, 1.0, hi=radius)
    else:
        f = box(domain, 1.0, center - radius, center + radius)
    return f * (total / mass(f))


def cosine_bump(domain: Domain, total: float = 1.0, radius: float = 1.0) -> Field:
    """``cos(π|x| / 2 radius)^2`` on the ball of the given radius, scaled to mass ``total``."""
    def func(x):
        r = np.abs(x) / radius
        return np.where(r < 1.0, np.cos(0.5 * math.pi * r) ** 2, 0.0)

    f = Field(domain, _cell_average(domain, func))
    m = mass(f)
    if m <= 0.0:
        raise DomainError("bump support is not resolved by the grid")
    return f * (total / m)


def nascent_delta(domain: Domain, k: float, total: float = 1.0, shape: str = "bump") -> Field:
    """Datum ``k^d u0(k x)`` for a unit-ball datum ``u0`` of mass ``total``."""
    if shape == "bump":
        return cosine_bump(domain, total, radius=1.0 / k)
    if shape == "box":
        return box_of_mass(domain, total, radius=1.0 / k)
    raise ConfigError(f"unknown initial shape {shape!r}")


def support_radius(f: Field, rel_tol: float = 0.0) -> float:
    """Radius of the smallest centred ball containing all nodes where ``|f| > rel_tol·max|f|``."""
    a = np.abs(f.values)
    if not np.any(a > 0):
        return 0.0
    idx = a > rel_tol * a.max()
    return float(np.max(np.abs(f.domain.nodes[idx])) + f.domain.h / 2)


def write_field_csv(f: Field, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "value"])
        for i, (x, v) in enumerate(zip(f.domain.nodes, f.values)):
            w.writerow([i, f"{x:.17g}", f"{v:.17g}"])
