"""Truncated singular kernel tables.

``K[i, j]`` holds the interaction weight of node ``j`` seen from node ``i``:
the kernel ``|x - y|^{-d-sp}`` (pre-integrated over spheres in radial mode)
times the radial or linear cell width. ``E[i]`` integrates the kernel over the
exterior of the truncation ball, where fields are zero.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, SingularError
from .exponents import ModelParams
from .grid import FULL_LINE, RADIAL, Domain, sphere_area

EXCLUDE_SELF_CELL = "exclude-self-cell"
QUADRATIC_ANNULUS = "quadratic-annulus"
TRIM_NEIGHBOURS = "trim-neighbour-cells"


@dataclass(frozen=True, eq=False)
class KernelTable:
    domain: Domain
    params: ModelParams
    epsilon: float
    K: np.ndarray
    E: np.ndarray
    diagonal_rule: str

    @property
    def p(self) -> float:
        return self.params.p

    def without_exterior(self) -> "KernelTable":
        E = np.zeros_like(self.E)
        E.setflags(write=False)
        return KernelTable(self.domain, self.params, self.epsilon, self.K, E, self.diagonal_rule)


# --------------------------------------------------------------------------
# angular reduction

def angular_kernel(r: float, rho: float, params: ModelParams, *, epsrel: float = 1e-8) -> float:
    """Kernel integrated over the sphere of radius ``rho`` seen from a point at radius ``r``.

    In one dimension this folds the mirror point ``-rho``. In higher dimension it
    is ``rho^{d-1} ω_{d-1} ∫_0^π (r² + rho² - 2 r rho cos θ)^{-(d+sp)/2} sin^{d-2} θ dθ``.
    """
    d, sp = params.d, params.sp
    if r < 0 or rho <= 0:
        raise ValueError("radii must be nonnegative (rho positive)")
    if r == rho:
        raise SingularError("coincident radii; route through the truncation rule")
    if d == 1:
        return abs(r - rho) ** (-(1.0 + sp)) + (r + rho) ** (-(1.0 + sp))
    a = 0.5 * (d + sp)
    f = lambda t: (r * r + rho * rho - 2.0 * r * rho * math.cos(t)) ** (-a) * math.sin(t) ** (d - 2)
    # integrand peaks at θ = 0 with width ~ |r - rho| / sqrt(r rho)
    width = abs(r - rho) / math.sqrt(r * rho) if r > 0 else math.pi
    cut = min(math.pi / 2, 4.0 * width)
    val = 0.0
    for lo, hi in ((0.0, cut), (cut, math.pi)):
        if hi > lo:
            val += integrate.quad(f, lo, hi, epsrel=epsrel, epsabs=0.0, limit=200)[0]
    return rho ** (d - 1) * sphere_area(d - 1) * val


def angular_kernel_matrix(r, rho, d: int, sp: float) -> np.ndarray:
    """Vectorised :func:`angular_kernel` for ``d >= 2`` via the Gegenbauer closed form

    ``∫_0^π (1 - 2x cos θ + x²)^{-a} sin^{d-2} θ dθ = B((d-1)/2, 1/2) 2F1(a, a-(d-2)/2; d/2; x²)``.
    """
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    a = 0.5 * (d + sp)
    big = np.maximum(r, rho)
    x = np.minimum(r, rho) / big
    ang = special.beta(0.5 * (d - 1), 0.5) * special.hyp2f1(a, a - 0.5 * (d - 2), 0.5 * d, x * x)
    return rho ** (d - 1) * sphere_area(d - 1) * big ** (-2.0 * a) * ang


def exterior_weight(x: float, R: float, params: ModelParams) -> float:
    """``∫_{|y| > R} |x - y|^{-d-sp} dy`` for ``|x| < R``."""
    d, sp = params.d, params.sp
    if d == 1:
        return ((R - x) ** (-sp) + (R + x) ** (-sp)) / sp
    r = abs(x)
    f = lambda rho: float(angular_kernel_matrix(r, rho, d, sp)) if r > 0 else \
        sphere_area(d) * rho ** (-1.0 - sp)
    if r == 0:
        return sphere_area(d) * R ** (-sp) / sp
    gap = R - r
    near = integrate.quad(f, R, R + 4 * gap, epsrel=1e-10, limit=200)[0]
    far = integrate.quad(f, R + 4 * gap, np.inf, epsrel=1e-10, limit=200)[0]
    return near + far


# --------------------------------------------------------------------------
# assembly

def _diagonal_rule(epsilon: float, h: float, params: ModelParams) -> str:
    if epsilon < 0:
        raise ConfigError("epsilon must be nonnegative")
    if epsilon >= h:
        raise ConfigError(f"epsilon = {epsilon} must be below the grid spacing {h}")
    if epsilon == 0.0 or math.isclose(epsilon, h / 2, rel_tol=1e-12):
        return EXCLUDE_SELF_CELL
    if epsilon < h / 2:
        if params.p != 2.0 or params.d != 1:
            raise ConfigError("sub-cell truncation radius is only supported for p = 2, d = 1")
        return QUADRATIC_ANNULUS
    return TRIM_NEIGHBOURS


def kernel_values(domain: Domain, params: ModelParams) -> np.ndarray:
    """Pointwise (pre-weight) kernel between nodes; zero on the diagonal."""
    x = domain.nodes
    sp = params.sp
    n = domain.n
    off = ~np.eye(n, dtype=bool)
    S = np.zeros((n, n))
    if domain.mode == FULL_LINE:
        dist = np.abs(x[:, None] - x[None, :])
        S[off] = dist[off] ** (-(1.0 + sp))
    elif domain.d == 1:
        dist = np.abs(x[:, None] - x[None, :])
        tot = x[:, None] + x[None, :]
        S[off] = dist[off] ** (-(1.0 + sp)) + tot[off] ** (-(1.0 + sp))
    else:
        rr, pp = np.meshgrid(x, x, indexing="ij")
        S[off] = angular_kernel_matrix(rr[off], pp[off], domain.d, sp)
    return S


def assemble_kernel(domain: Domain, epsilon: float, params: ModelParams,
                    *, exterior: bool = True) -> KernelTable:
    if params.d != domain.d:
        raise ConfigError("parameter dimension does not match the domain")
    h = domain.h
    rule = _diagonal_rule(float(epsilon), h, params)
    K = kernel_values(domain, params) * h
    n = domain.n
    sp = params.sp
    idx = np.arange(n - 1)
    if rule == QUADRATIC_ANNULUS:
        # part of the self cell outside B_eps, integrated against a local
        # quadratic reconstruction; lands on the two neighbours
        c = ((h / 2) ** (2.0 - sp) - epsilon ** (2.0 - sp)) / (2.0 - sp) / h**2
        K[idx, idx + 1] += c
        K[idx + 1, idx] += c
    elif rule == TRIM_NEIGHBOURS:
        frac = (1.5 * h - epsilon) / h
        K[idx, idx + 1] *= frac
        K[idx + 1, idx] *= frac
    np.fill_diagonal(K, 0.0)
    if exterior:
        if domain.d == 1:
            E = ((domain.R - domain.nodes) ** (-sp) + (domain.R + domain.nodes) ** (-sp)) / sp
        else:
            E = np.array([exterior_weight(r, domain.R, params) for r in domain.nodes])
    else:
        E = np.zeros(n)
    K = np.ascontiguousarray(K)
    K.setflags(write=False)
    E = np.ascontiguousarray(E, dtype=float)
    E.setflags(write=False)
    return KernelTable(domain, params, float(epsilon), K, E, rule)


# --------------------------------------------------------------------------
# binary cache: magic, little-endian u32 header length, JSON key tuple,
# then K row-major and E, both as little-endian float64

_MAGIC = b"DNLK"


def table_key(domain: Domain, params: ModelParams, epsilon: float) -> tuple:
    return (domain.mode, domain.d, params.s, params.p, domain.R, domain.n, float(epsilon))


def save_table(table: KernelTable, path) -> None:
    key = json.dumps(list(table_key(table.domain, table.params, table.epsilon))).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(key)))
        fh.write(key)
        fh.write(np.asarray(table.K, dtype="<f8").tobytes(order="C"))
        fh.write(np.asarray(table.E, dtype="<f8").tobytes())


def load_table(path, domain: Domain, params: ModelParams, epsilon: float) -> KernelTable | None:
    """Read a cached table; ``None`` when the key does not match."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        return None
    (klen,) = struct.unpack("<I", raw[4:8])
    key = tuple(json.loads(raw[8:8 + klen]))
    if key != table_key(domain, params, epsilon):
        return None
    n = domain.n
    body = np.frombuffer(raw[8 + klen:], dtype="<f8")
    if body.size != n * n + n:
        return None
    K = body[: n * n].reshape(n, n).astype(float)
    E = body[n * n:].astype(float)
    K.setflags(write=False)
    E.setflags(write=False)
    rule = _diagonal_rule(float(epsilon), domain.h, params)
    return KernelTable(domain, params, float(epsilon), K, E, rule)


def cached_kernel(domain: Domain, epsilon: float, params: ModelParams, cache_dir) -> KernelTable:
    key = table_key(domain, params, epsilon)
    name = "kernel_" + "_".join(str(k) for k in key).replace("/", "-") + ".bin"
    path = Path(cache_dir) / name
    if path.exists():
        table = load_table(path, domain, params, epsilon)
        if table is not None:
            return table
    table = assemble_kernel(domain, epsilon, params)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, path)
    return table
