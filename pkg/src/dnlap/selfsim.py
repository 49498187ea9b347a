"""Scaling transforms, similarity variables and Barenblatt profile extraction.

The equation is invariant under ``u ↦ k^d u(k x, k^θ t)`` with
``θ = d(m(p-1)-1) + sp = 1/β`` and under ``u ↦ M u(x, M^{m(p-1)-1} t)``.
Self-similar solutions read ``u = t^{-dβ} F(x t^{-β})``.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, DomainError, MassError, NonConvergence, ResolutionError
from .exponents import ExponentSet, ModelParams, derive_exponents
from .grid import FULL_LINE, RADIAL, Domain, Field, build_domain, mass, nascent_delta, support_radius
from .kernel import KernelTable, assemble_kernel
from .nonlocal_op import odd_power, pv_values
from .resolvent import StepConfig, march

log = logging.getLogger(__name__)

MIN_SUPPORT_CELLS = 8


def resample(f: Field, target: Domain, scale: float = 1.0, amplitude: float = 1.0) -> Field:
    """``amplitude · f(scale · y)`` at the nodes ``y`` of ``target``.

    Linear interpolation between nodes, the end value held constant up to the
    truncation radius and exactly zero beyond it.
    """
    if f.domain.mode != target.mode or f.domain.d != target.d:
        raise ConfigError("resampling needs matching mode and dimension")
    y = scale * target.nodes
    vals = np.interp(y, f.domain.nodes, f.values)
    vals[np.abs(y) > f.domain.R] = 0.0
    return Field(target, amplitude * vals)


def _support_cells(f: Field) -> float:
    radius = support_radius(f)
    extent = 2.0 * radius if f.domain.mode == FULL_LINE else radius
    return extent / f.domain.h


def time_factor_Tk(params: ModelParams, k: float) -> float:
    return k ** (params.d * (params.m * (params.p - 1.0) - 1.0) + params.sp)


def time_factor_mass(params: ModelParams, M: float) -> float:
    return M ** (params.m * (params.p - 1.0) - 1.0)


def transform_Tk(u0: Field, k: float, params: ModelParams,
                 *, min_cells: int = MIN_SUPPORT_CELLS) -> tuple[Field, float]:
    """Return ``k^d u0(k x)`` on the same grid and the time dilation factor."""
    if not k > 0:
        raise ConfigError("k must be positive")
    out = resample(u0, u0.domain, scale=k, amplitude=k ** u0.domain.d)
    if np.any(out.values) and _support_cells(out) < min_cells:
        raise ResolutionError(
            f"compressed support spans {_support_cells(out):.2f} cells, need {min_cells}")
    return out, time_factor_Tk(params, k)


def transform_mass(u0: Field, M: float, params: ModelParams) -> tuple[Field, float]:
    """Return ``M u0`` and the time dilation factor ``M^{m(p-1)-1}``."""
    if not M > 0:
        raise ConfigError("M must be positive")
    return u0 * M, time_factor_mass(params, M)


@dataclass(frozen=True, eq=False)
class Profile:
    field: Field
    mass: float
    source_time: float
    params: ModelParams
    exps: ExponentSet
    distances: tuple = ()
    meta: dict = dc_field(default_factory=dict)

    @property
    def domain(self) -> Domain:
        return self.field.domain

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def to_profile(u: Field, t: float, params: ModelParams, exps: ExponentSet | None = None,
               grid: Domain | None = None) -> Profile:
    """Similarity variables ``V(y) = t^{dβ} u(y t^β)`` on ``grid`` (default: ``u``'s grid)."""
    if not t > 0:
        raise ConfigError("t must be positive")
    exps = exps or derive_exponents(params)
    grid = grid or u.domain
    b = exps.beta
    V = resample(u, grid, scale=t ** b, amplitude=t ** (grid.d * b))
    return Profile(V, mass(V), float(t), params, exps)


def profile_distance(a: Profile, b: Profile) -> float:
    """Relative weighted L¹ distance, normalised by the mass of ``b``."""
    if not a.domain.same_as(b.domain):
        raise DomainError("profiles live on different grids")
    w = a.domain.weights
    return float(np.dot(w, np.abs(a.values - b.values)) / np.dot(w, np.abs(b.values)))


def radial_derivative_term(F: Field) -> np.ndarray:
    """``r^{1-d} (r^d F)' = d F + r F'`` by centred differences.

    The even reflection supplies the ghost value at the origin and the field is
    zero beyond the truncation radius.
    """
    dom = F.domain
    if dom.mode != RADIAL:
        raise DomainError("profile residual is defined in radial mode")
    v = F.values
    ext = np.concatenate([[v[0]], v, [0.0]])
    dF = (ext[2:] - ext[:-2]) / (2.0 * dom.h)
    return dom.d * v + dom.nodes * dF


def profile_residual(F: Profile, table: KernelTable, beta: float | None = None) -> Field:
    """Residual of the stationary profile equation ``A(F^m) = β r^{1-d} (r^d F)'``."""
    if F.domain.mode != RADIAL:
        raise DomainError("profile residual is defined in radial mode")
    if not F.domain.same_as(table.domain):
        raise DomainError("kernel table does not live on the profile grid")
    b = F.exps.beta if beta is None else beta
    if not np.any(F.values):
        return F.domain.zeros()
    pv = pv_values(odd_power(F.values, F.params.m), table)
    return Field(F.domain, pv - b * radial_derivative_term(F.field))


def weighted_residual(res: Field, r_max: float) -> float:
    sel = res.domain.radii <= r_max
    return float(np.dot(res.domain.weights[sel], np.abs(res.values[sel])))


# --------------------------------------------------------------------------
# extraction

@dataclass(frozen=True)
class ExtractionGrid:
    """Grid used for the ``k = 1`` run; ``shrink`` divides the radius by ``k`` for later runs.

    With ``shrink`` the ``k``-th run is the exact rescaling of the ``k = 1``
    problem, so every run resolves its compressed datum equally well.
    """

    R: float = 60.0
    n: int = 512
    epsilon: float = 0.0
    shrink: bool = True


def _k_domain(params: ModelParams, grid: ExtractionGrid, k: float) -> Domain:
    R = grid.R / k if grid.shrink else grid.R
    return build_domain(RADIAL, params.d, R, grid.n)


def _run_nascent(params, M, k, grid: ExtractionGrid, cfg: StepConfig, shape: str):
    dom = _k_domain(params, grid, k)
    u0 = nascent_delta(dom, k, M, shape)
    if _support_cells(u0) < MIN_SUPPORT_CELLS:
        raise ResolutionError(
            f"k = {k}: datum support spans {_support_cells(u0):.2f} cells, need {MIN_SUPPORT_CELLS}")
    eps = grid.epsilon / k if grid.shrink else grid.epsilon
    table = assemble_kernel(dom, eps, params)
    traj = march(u0, cfg, table, params.m)
    return traj


def extract_barenblatt(params: ModelParams, M: float, k_schedule, cfg: StepConfig,
                       grid: ExtractionGrid = ExtractionGrid(), *, t_star: float = 1.0,
                       shape: str = "bump", workers: int = 1, strict: bool = True) -> Profile:
    """Evolve nascent deltas ``k^d u0(k x)`` to ``t_star`` and rescale.

    All profiles are resampled onto the grid of the largest ``k`` expressed in
    the similarity variable ``y = x t_star^{-β}``. The returned
    profile is the last one; ``distances`` holds the relative L¹ distances of
    successive profiles, which must decrease strictly (``NonConvergence``
    otherwise, unless ``strict`` is off).
    """
    exps = derive_exponents(params)
    if params.m < 1 or exps.beta <= 0:
        raise ConfigError("extraction needs m >= 1 and p above the critical exponent")
    ks = sorted(float(k) for k in k_schedule)
    if not ks or ks[0] <= 0:
        raise ConfigError("k schedule must be positive")
    run_cfg = dataclasses.replace(cfg, t1=t_star)

    def one(k):
        return _run_nascent(params, M, k, grid, run_cfg, shape)

    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(one, ks))
    else:
        trajs = [one(k) for k in ks]

    last_dom = trajs[-1].domain
    target = build_domain(RADIAL, params.d, last_dom.R * t_star ** (-exps.beta), last_dom.n)
    profiles = [to_profile(tr.snapshots[-1], tr.times[-1], params, exps, grid=target) for tr in trajs]
    dists = tuple(profile_distance(profiles[i + 1], profiles[i]) for i in range(len(profiles) - 1))
    log.info("extraction distances %s", dists)
    if strict and any(b >= a for a, b in zip(dists, dists[1:])):
        raise NonConvergence(f"successive profile distances do not decrease: {dists}",
                             residual=dists[-1])
    last = profiles[-1]
    meta = {"k_schedule": ks, "shape": shape, "t_star": t_star,
            "mass_initial": float(mass(trajs[-1].snapshots[0])),
            "trajectory": trajs[-1], "profiles": profiles}
    return dataclasses.replace(last, distances=dists, meta=meta)


def rescale_profile_mass(F1: Profile, M: float, grid: Domain | None = None,
                         *, mass_tol: float = 0.02) -> Profile:
    """Profile of mass ``M`` from a unit-mass one: ``M^{spβ} F1(M^{-(m(p-1)-1)β} z)``."""
    if abs(F1.mass - 1.0) > mass_tol:
        raise MassError(f"reference profile has mass {F1.mass:.6g}, expected 1")
    if not M > 0:
        raise ConfigError("M must be positive")
    p = F1.params
    b = F1.exps.beta
    scale = M ** (-(p.m * (p.p - 1.0) - 1.0) * b)
    amp = M ** (p.sp * b)
    grid = grid or F1.domain
    V = resample(F1.field, grid, scale=scale, amplitude=amp)
    return Profile(V, mass(V), F1.source_time, p, F1.exps)


def write_profile_csv(F: Profile, path, window: tuple[float, float] | None = None) -> None:
    lo, hi = window if window else (math.inf, -math.inf)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "F", "g_fit_window"])
        for r, v in zip(F.domain.radii, F.values):
            wr.writerow([f"{r:.17g}", f"{v:.17g}", int(lo <= r <= hi)])
