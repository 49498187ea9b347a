"""Piecewise global barriers and their numerical calibration.

Profile barrier (radial variable ``r = |z|``)::

    superlinear / critical   A                 r <= R1
                             C1 r^{-d}         R1 < r <= R2
                             C2 g(r)           r > R2
    sublinear                A                 r <= R2
                             C2 g(r)           r > R2

and the space-time barrier ``H(x, t) = (t+τ)^{-dβ} G(|x| (t+τ)^{-β})``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, SearchFailure
from .exponents import DecayRegime, ExponentSet, ModelParams, derive_exponents
from .grid import RADIAL, build_domain
from .kernel import KernelTable, angular_kernel_matrix, assemble_kernel
from .nonlocal_op import odd_power

log = logging.getLogger(__name__)

MAX_ITER = 60
FLAG_ITER = 10


@dataclass(frozen=True)
class BarrierConstants:
    A: float
    C1: float
    C2: float
    R1: float
    R2: float
    log_power: float
    regime: str
    t_shift: float = 1.0
    iterations: int = 0
    flagged: bool = False
    certified: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def barrier_log_power(params: ModelParams, exps: ExponentSet) -> float:
    """``γ = 1/(1 - m(p-1))`` for the critical barrier, else 0."""
    return 1.0 / (1.0 - params.homogeneity) if exps.regime == DecayRegime.CRITICAL else 0.0


def critical_threshold(c: "BarrierConstants", params: ModelParams) -> float:
    return min(2 * c.R2, 2 * math.exp(c.log_power / params.sp))


def matched_A(C1: float, R1: float, d: int) -> float:
    return C1 * R1 ** (-d)


def matched_C2(C1: float, R2: float, params: ModelParams, exps: ExponentSet) -> float:
    """Far amplitude making ``G`` continuous at ``R2`` (superlinear and critical)."""
    if exps.regime == DecayRegime.CRITICAL:
        if R2 <= 1.0:
            raise DomainError("the logarithmic tail needs R2 > 1")
        return C1 * R2 ** params.sp / math.log(R2) ** barrier_log_power(params, exps)
    return C1 * R2 ** params.sp


def sublinear_A(C2: float, R2: float, exps: ExponentSet) -> float:
    return C2 * R2 ** (-exps.tail_exponent)


def _make(params, exps, C1, R1, R2, C2=None, t_shift=1.0, iterations=0,
          certified=True) -> BarrierConstants:
    d = params.d
    if exps.regime == DecayRegime.SUBLINEAR:
        A = sublinear_A(C2, R2, exps)
        return BarrierConstants(A, A * R2 ** d, C2, R2, R2, 0.0, exps.regime.value,
                                t_shift, iterations, iterations > FLAG_ITER, certified)
    A = matched_A(C1, R1, d)
    C2 = matched_C2(C1, R2, params, exps)
    return BarrierConstants(A, C1, C2, R1, R2, barrier_log_power(params, exps), exps.regime.value,
                            t_shift, iterations, iterations > FLAG_ITER)


# --------------------------------------------------------------------------
# profile evaluation

def _g(r, c: BarrierConstants, exps: ExponentSet, d: int, sp: float):
    if exps.regime == DecayRegime.CRITICAL:
        return r ** (-(d + sp)) * np.log(r) ** c.log_power
    return r ** (-exps.tail_exponent)


def eval_G(r, c: BarrierConstants, params: ModelParams, exps: ExponentSet):
    """Profile barrier at radii ``r`` (scalar or array)."""
    r = np.abs(np.asarray(r, dtype=float))
    d, sp = params.d, params.sp
    out = np.full(r.shape, c.A)
    far = r > c.R2
    out[far] = c.C2 * _g(r[far], c, exps, d, sp)
    if exps.regime != DecayRegime.SUBLINEAR:
        mid = (r > c.R1) & ~far
        out[mid] = c.C1 * r[mid] ** (-d)
    return float(out) if out.ndim == 0 else out


def divergence_term(r, c: BarrierConstants, params: ModelParams, exps: ExponentSet):
    """``r^{1-d} (r^d G)'`` in closed form (one-sided at the break points)."""
    r = np.abs(np.asarray(r, dtype=float))
    d, sp = params.d, params.sp
    out = np.full(r.shape, d * c.A)
    far = r > c.R2
    rf = r[far]
    if exps.regime == DecayRegime.CRITICAL:
        lg = np.log(rf)
        out[far] = c.C2 * rf ** (-(d + sp)) * lg ** c.log_power * (-sp + c.log_power / lg)
    else:
        out[far] = c.C2 * (d - exps.tail_exponent) * rf ** (-exps.tail_exponent)
    if exps.regime != DecayRegime.SUBLINEAR:
        out[(r > c.R1) & ~far] = 0.0
    return float(out) if out.ndim == 0 else out


def eval_H(x, t: float, c: BarrierConstants, params: ModelParams, exps: ExponentSet | None = None):
    """Space-time barrier ``(t+τ)^{-dβ} G(|x| (t+τ)^{-β})``."""
    exps = exps or derive_exponents(params)
    if t < 0:
        raise ConfigError("t must be nonnegative")
    T = t + c.t_shift
    b = exps.beta
    return T ** (-params.d * b) * eval_G(np.abs(np.asarray(x, dtype=float)) * T ** (-b), c, params, exps)


def continuity_gaps(c: BarrierConstants, params: ModelParams, exps: ExponentSet) -> list[float]:
    """Relative jumps of ``G`` across its break points."""
    gaps = []
    rel = 1e-13
    for R in sorted({c.R1, c.R2}):
        lo = eval_G(R, c, params, exps)
        hi = eval_G(R * (1 + rel), c, params, exps)
        gaps.append(abs(lo - hi) / max(lo, hi))
    return gaps


# --------------------------------------------------------------------------
# residual

def residual_table(R: float, n: int, params: ModelParams) -> KernelTable:
    """Radial table on which barrier residuals are sampled (exterior handled exactly)."""
    return assemble_kernel(build_domain(RADIAL, params.d, R, n), 0.0, params, exterior=False)


def _exterior(z: float, Gz_m: float, c, params, exps, R: float) -> float:
    """``∫_{|y|>R} (G(z)^m - G(y)^m)^{p-1} |z-y|^{-d-sp} dy`` with the true tail of ``G``."""
    d, sp, m, q = params.d, params.sp, params.m, params.p - 1.0

    def f(rho):
        diff = Gz_m - eval_G(rho, c, params, exps) ** m
        if d == 1:
            k = abs(z - rho) ** (-(1.0 + sp)) + (z + rho) ** (-(1.0 + sp))
        else:
            k = float(angular_kernel_matrix(z, rho, d, sp))
        return odd_power(diff, q) * k

    pts = [R, 2 * R, 8 * R]
    scale = abs(Gz_m) ** q * R ** (-sp)
    val = 0.0
    for lo, hi in zip(pts, pts[1:] + [np.inf]):
        val += integrate.quad(f, lo, hi, epsrel=1e-10, epsabs=1e-13 * scale, limit=200)[0]
    return val


def _region(z: float, c: BarrierConstants, params: ModelParams, exps: ExponentSet) -> str:
    if exps.regime == DecayRegime.SUBLINEAR:
        return "near" if z <= c.R2 else "far"
    if z <= c.R1:
        return "near"
    if exps.regime == DecayRegime.CRITICAL:
        return "far" if z > critical_threshold(c, params) else "intermediate"
    return "far" if z >= 2 * c.R2 else "intermediate"


def supersolution_residual(c: BarrierConstants, z, table: KernelTable, params: ModelParams,
                           exps: ExponentSet | None = None, *, safety: float = 1.0,
                           beta: float | None = None):
    """``A_ε(G^m)(z) - β r^{1-d} (r^d G)'(z)`` at the table nodes nearest to ``z``.

    ``safety`` inflates the unfavourable part of the drift term and deflates a
    favourable one by the same factor. Raises ``DomainError`` for radii in the
    intermediate region, where the barrier rests on the ``|x|^{-d}`` bound.
    """
    exps = exps or derive_exponents(params)
    b = exps.beta if beta is None else beta
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    dom = table.domain
    if dom.mode != RADIAL:
        raise DomainError("barrier residuals are sampled on radial grids")
    for zz in zs:
        if _region(zz, c, params, exps) == "intermediate":
            raise DomainError(f"z = {zz} lies in the unchecked intermediate region")
    if c.A == 0.0:
        out = np.zeros(zs.shape)
        return float(out[0]) if scalar else out
    idx = np.clip(np.rint(zs / dom.h - 0.5).astype(int), 0, dom.n - 1)
    r = dom.nodes[idx]
    Gm = eval_G(dom.nodes, c, params, exps) ** params.m
    q = params.p - 1.0
    out = np.empty(zs.shape)
    for k, (i, ri) in enumerate(zip(idx, r)):
        pv = float(np.dot(table.K[i], odd_power(Gm[i] - Gm, q)))
        pv += _exterior(ri, Gm[i], c, params, exps, dom.R)
        drift = b * divergence_term(ri, c, params, exps)
        drift = drift * safety if drift > 0 else drift / safety
        out[k] = pv - drift
    return float(out[0]) if scalar else out


def near_samples(c: BarrierConstants, table: KernelTable, count: int = 8) -> np.ndarray:
    R = c.R2 if c.regime == DecayRegime.SUBLINEAR.value else c.R1
    nodes = table.domain.nodes
    inside = nodes[nodes <= R]
    if inside.size == 0:
        raise DomainError("residual grid does not resolve the near region")
    pick = np.unique(np.linspace(0, inside.size - 1, min(count, inside.size)).astype(int))
    return inside[pick]


def far_samples(c: BarrierConstants, table: KernelTable, params: ModelParams,
                exps: ExponentSet, count: int = 16) -> np.ndarray:
    if exps.regime == DecayRegime.SUBLINEAR:
        lo = c.R2
    elif exps.regime == DecayRegime.CRITICAL:
        # past 2R2 only: between the two thresholds G is still C1 r^{-d}, whose
        # drift term vanishes, so no constants could pass there
        lo = max(2 * c.R2, 2 * math.exp(c.log_power / params.sp))
    else:
        lo = 2 * c.R2
    hi = table.domain.R / 2
    if not hi > lo:
        raise DomainError("residual grid too small for the far region")
    nodes = table.domain.nodes
    z = np.geomspace(lo, hi, count)
    idx = np.clip(np.searchsorted(nodes, z), 0, nodes.size - 1)
    return np.unique(nodes[idx][nodes[idx] > lo])


# --------------------------------------------------------------------------
# construction

@dataclass(frozen=True)
class ResidualGrid:
    """Sampling grids: radii are multiples of ``R1`` (near) and ``R2`` (far).

    The sublinear far grid reaches much further out: the cap perturbs the
    residual of the pure power tail only like ``r^{-(d - γ m(p-1))}``.
    """

    near_factor: float = 4.0
    far_factor: float = 8.0
    n: int = 1024
    far_factor_sublinear: float = 256.0
    n_sublinear: int = 2048

    def far(self, sublinear: bool) -> tuple[float, int]:
        return (self.far_factor_sublinear, self.n_sublinear) if sublinear else (self.far_factor, self.n)


def region_table(c: BarrierConstants, params: ModelParams, exps: ExponentSet, region: str,
                 grid: ResidualGrid = ResidualGrid()) -> KernelTable:
    """Residual grid for the ``near`` or ``far`` samples of ``c``."""
    sub = exps.regime == DecayRegime.SUBLINEAR
    if region == "near":
        return residual_table(grid.near_factor * (c.R2 if sub else c.R1), grid.n, params)
    factor, n = grid.far(sub)
    return residual_table(factor * (c.R2 if sub else 2 * c.R2), n, params)


def sample_residuals(c: BarrierConstants, params: ModelParams, exps: ExponentSet, region: str,
                     grid: ResidualGrid = ResidualGrid(), *, safety: float = 1.0):
    """Sample radii and residuals in one region; ``safety`` as in :func:`supersolution_residual`."""
    table = region_table(c, params, exps, region, grid)
    z = near_samples(c, table) if region == "near" else far_samples(c, table, params, exps)
    return z, supersolution_residual(c, z, table, params, exps, safety=safety)


def _near_ok(c, params, exps, grid: ResidualGrid, safety) -> tuple[bool, float]:
    res = sample_residuals(c, params, exps, "near", grid, safety=safety)[1]
    return bool(np.min(res) >= 0.0), float(np.min(res))


def _far_ok(c, params, exps, grid: ResidualGrid, safety) -> tuple[bool, float]:
    res = sample_residuals(c, params, exps, "far", grid, safety=safety)[1]
    return bool(np.min(res) >= 0.0), float(np.min(res))


def build_barrier(params: ModelParams, exps: ExponentSet | None, u0_stats: dict,
                  *, grid: ResidualGrid = ResidualGrid(), safety: float = 2.0,
                  strict: bool = True) -> BarrierConstants:
    """Calibrate barrier constants for data with the given support radius, sup norm and mass.

    The residual is sampled in the near and far regions; constants are enlarged
    following the case order on ``m(p-1)`` until both samples are nonnegative
    with the drift term weighted by ``safety``. With ``strict`` off, a sublinear
    construction whose near condition cannot be met is returned with
    ``certified = False`` instead of raising.
    """
    exps = exps or derive_exponents(params)
    if exps.beta <= 0:
        raise ConfigError("barriers need p above the critical exponent")
    supp = float(u0_stats["support_radius"])
    sup = float(u0_stats["sup_norm"])
    M = float(u0_stats["mass"])
    if supp <= 0 or sup <= 0:
        return BarrierConstants(0.0, 0.0, 0.0, 1.0, 1.0, barrier_log_power(params, exps), exps.regime.value)
    if exps.regime == DecayRegime.SUBLINEAR:
        return _build_sublinear(params, exps, supp, sup, grid, safety, strict)

    d = params.d
    h = params.homogeneity
    R1 = supp
    C1 = max(sup * R1 ** d, M)
    R2 = 2.0 * R1
    if exps.regime == DecayRegime.CRITICAL:
        R2 = max(R2, 2.0 * math.e)
    for it in range(1, MAX_ITER + 1):
        c = _make(params, exps, C1, R1, R2, iterations=it)
        near, near_min = _near_ok(c, params, exps, grid, safety)
        if not near:
            log.debug("iteration %d: near residual %.3e", it, near_min)
            if h > 1.0:
                C1 *= 2.0
            else:
                # shrinking R1 raises A; C1 is kept, so the data stay dominated
                R1 /= 2.0
            continue
        far, far_min = _far_ok(c, params, exps, grid, safety)
        if not far:
            log.debug("iteration %d: far residual %.3e", it, far_min)
            R2 *= 2.0
            continue
        if c.flagged:
            log.warning("barrier calibration needed %d iterations", it)
        return c
    raise SearchFailure(f"no admissible barrier constants after {MAX_ITER} iterations")


def _build_sublinear(params, exps, supp, sup, grid, safety, strict) -> BarrierConstants:
    """Sublinear case.

    Under ``v ↦ h^γ v(h y)`` the capped profile only changes ``R2``, so both the
    near and the far condition are bounds on ``C2`` alone: the far one from
    below, the near one from above. ``C2`` is the smallest power of two passing
    the far check; the time shift ``τ`` then secures initial domination.
    """
    R2 = 1.0
    C2 = 1.0
    it = 0

    def far(C2):
        return _far_ok(_make(params, exps, None, R2, R2, C2=C2), params, exps, grid, safety)[0]

    up = far(C2)
    while True:
        it += 1
        if it > MAX_ITER:
            raise SearchFailure(f"far condition unmet after {MAX_ITER} iterations")
        nxt = C2 / 2.0 if up else C2 * 2.0
        ok = far(nxt)
        if up and not ok:
            break
        C2 = nxt
        if not up and ok:
            break
    c = _make(params, exps, None, R2, R2, C2=C2, iterations=it)
    near, near_min = _near_ok(c, params, exps, grid, safety)
    if not near:
        msg = (f"sublinear near condition fails at the far-admissible C2 = {C2:.4g} "
               f"(residual {near_min:.3e}); it does not depend on R2")
        if strict:
            raise SearchFailure(msg)
        log.warning(msg)
    # initial domination: H(supp, 0) = C2 supp^{-γ} τ^{1/(1-m(p-1))} >= sup with the
    # cap covering the support at t = 0
    gam = exps.tail_exponent
    tau = max(1.0, (sup * supp ** gam / C2) ** (1.0 - params.homogeneity))
    R2 = supp * tau ** (-exps.beta)
    return _make(params, exps, None, R2, R2, C2=C2, t_shift=tau, iterations=it, certified=near)


# --------------------------------------------------------------------------
# checks

@dataclass
class DominationReport:
    max_violation: float
    worst_step: int
    worst_node: int
    passed: bool
    tolerance: float


def check_domination(traj, c: BarrierConstants, params: ModelParams, exps: ExponentSet | None = None,
                     *, tol: float = 1e-3, floor: float = 1e-300) -> DominationReport:
    """Largest ``(|u| - H) / max(H, floor)`` over all snapshots and nodes."""
    exps = exps or derive_exponents(params)
    worst = -math.inf
    where = (0, 0)
    x = traj.domain.nodes
    for k, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
        H = eval_H(x, float(t), c, params, exps)
        rel = (np.abs(snap.values) - H) / np.maximum(H, floor)
        i = int(np.argmax(rel))
        if rel[i] > worst:
            worst, where = float(rel[i]), (k, i)
    if not np.any([np.any(s.values) for s in traj.snapshots]):
        worst = min(worst, 0.0)
    return DominationReport(worst, where[0], where[1], worst <= tol, tol)


def write_barrier_csv(c: BarrierConstants, params: ModelParams, path, exps: ExponentSet | None = None,
                      *, grid: ResidualGrid = ResidualGrid()) -> None:
    exps = exps or derive_exponents(params)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["region", "r", "G", "residual"])
        if c.A == 0.0:
            return
        for region in ("near", "far"):
            z, res = sample_residuals(c, params, exps, region, grid)
            for zz, rr in zip(z, res):
                wr.writerow([region, f"{zz:.17g}", f"{eval_G(zz, c, params, exps):.17g}", f"{rr:.17g}"])
