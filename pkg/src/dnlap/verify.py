"""Executable checks of the qualitative theory on computed trajectories and profiles."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .errors import GridMismatch, PreconditionError, QualityError, RegimeError, WindowError
from .exponents import DecayRegime, ExponentSet, ModelParams, derive_exponents
from .grid import FULL_LINE, RADIAL, mass
from .kernel import KernelTable
from .nonlocal_op import odd_power, weak_pairing
from .resolvent import StepConfig, Trajectory
from .selfsim import ExtractionGrid, Profile, extract_barenblatt, profile_distance, rescale_profile_mass

SLACK_PER_STEP = 10.0


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class PropertyReport:
    """Outcome of one check. ``passed`` is ``None`` for informational reports."""

    name: str
    passed: bool | None
    measured: dict
    tolerance: float
    anchor: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @property
    def failed(self) -> bool:
        return self.passed is False


def _slack(traj: Trajectory, steps: int | None = None) -> float:
    k = len(traj.times) - 1 if steps is None else steps
    return SLACK_PER_STEP * traj.newton_tol * k


def _same_grid(t1: Trajectory, t2: Trajectory) -> None:
    if not t1.domain.same_as(t2.domain):
        raise GridMismatch("trajectories live on different domains")
    if len(t1.times) != len(t2.times) or not np.allclose(t1.times, t2.times, rtol=0, atol=0):
        raise GridMismatch("trajectories use different time grids")


# --------------------------------------------------------------------------
# contraction and comparison

def check_contraction(traj1: Trajectory, traj2: Trajectory) -> PropertyReport:
    """``‖[u1-u2]^ν(t)‖_1 ≤ ‖[u1-u2]^ν(0)‖_1`` for ``ν = +`` and ``ν = 1``."""
    _same_grid(traj1, traj2)
    w = traj1.domain.weights
    pos = []
    tot = []
    for a, b in zip(traj1.snapshots, traj2.snapshots):
        diff = a.values - b.values
        pos.append(float(np.dot(w, np.maximum(diff, 0.0))))
        tot.append(float(np.dot(w, np.abs(diff))))
    pos = np.array(pos)
    tot = np.array(tot)
    slack = _slack(traj1)
    ex_pos = float(np.max(pos - pos[0]))
    ex_tot = float(np.max(tot - tot[0]))
    return PropertyReport(
        "contraction", bool(ex_pos <= slack and ex_tot <= slack),
        {"max_excess_positive": ex_pos, "max_excess_l1": ex_tot,
         "initial_positive": float(pos[0]), "initial_l1": float(tot[0])},
        slack, "L1 contraction and T-accretivity")


def check_reflection(traj: Trajectory, b: float = 0.0, *, rel_tol: float = 1e-6) -> PropertyReport:
    """``u(x,t) ≤ u(2b-x,t)`` for ``x > b`` on a one-dimensional full-line run."""
    dom = traj.domain
    if dom.mode != FULL_LINE or dom.d != 1:
        raise PreconditionError("reflection check needs a one-dimensional full-line run")
    x = dom.nodes
    right = x > b
    mirror = 2 * b - x[right]
    inside = np.abs(mirror) <= dom.R

    def excess(u):
        um = np.zeros(mirror.size)
        um[inside] = np.interp(mirror[inside], x, u.values)
        return u.values[right] - um

    linf0 = float(np.max(np.abs(traj.snapshots[0].values)))
    if np.max(excess(traj.snapshots[0]), initial=0.0) > rel_tol * linf0:
        raise PreconditionError("initial datum is not ordered against its reflection")
    worst = -math.inf
    for u in traj.snapshots:
        linf = float(np.max(np.abs(u.values)))
        e = float(np.max(excess(u), initial=-math.inf))
        worst = max(worst, e / linf if linf > 0 else 0.0)
    return PropertyReport("reflection", bool(worst <= rel_tol), {"max_relative_excess": worst, "b": b},
                          rel_tol, "comparison on reflections")


def check_radial_monotone(traj: Trajectory, *, rel_tol: float = 1e-6) -> PropertyReport:
    """Radially decreasing data stay radially decreasing, nodewise."""
    if traj.domain.mode == FULL_LINE:
        order = np.argsort(np.abs(traj.domain.nodes), kind="stable")
    else:
        order = np.arange(traj.domain.n)

    def rise(u):
        v = u.values[order]
        return float(np.max(np.diff(v), initial=0.0))

    linf0 = float(np.max(np.abs(traj.snapshots[0].values)))
    if rise(traj.snapshots[0]) > rel_tol * linf0:
        raise PreconditionError("initial datum is not radially decreasing")
    worst = 0.0
    for u in traj.snapshots:
        linf = float(np.max(np.abs(u.values)))
        if linf > 0:
            worst = max(worst, rise(u) / linf)
    return PropertyReport("radial_monotonicity", bool(worst <= rel_tol), {"max_relative_rise": worst},
                          rel_tol, "radially symmetric and radially decreasing")


# --------------------------------------------------------------------------
# mass

def check_mass_conservation(traj: Trajectory, exps: ExponentSet, refined: Trajectory | None = None,
                            *, tol: float = 0.01, refine_ratio: float = 0.6,
                            informational: bool = False) -> PropertyReport:
    """Largest relative mass drift over the run.

    With ``refined`` (same run on a finer grid) the drift must also shrink by
    ``refine_ratio``. Below ``p_one`` the conservation statement does not apply:
    ``RegimeError`` unless ``informational``, in which case the mass-loss curve
    is reported without a verdict.
    """
    masses = np.array([mass(u) for u in traj.snapshots])
    m0 = masses[0]
    drift = float(np.max(np.abs(masses - m0)) / abs(m0)) if m0 != 0 else 0.0
    below = exps.regime == DecayRegime.SUBLINEAR
    if below:
        if not informational:
            raise RegimeError("mass conservation needs p >= p_one")
        return PropertyReport("mass_loss", None, {"relative_loss": drift},
                              tol, "mass conservation (outside its hypothesis)",
                              {"times": traj.times.tolist(), "mass": masses.tolist()})
    measured = {"drift": drift}
    ok = drift < tol
    if refined is not None:
        rm = np.array([mass(u) for u in refined.snapshots])
        rdrift = float(np.max(np.abs(rm - rm[0])) / abs(rm[0])) if rm[0] != 0 else 0.0
        measured["drift_refined"] = rdrift
        measured["ratio"] = rdrift / drift if drift > 0 else 0.0
        ok = ok and (drift == 0.0 or rdrift <= refine_ratio * drift)
    return PropertyReport("mass_conservation", bool(ok), measured, tol, "mass conservation")


# --------------------------------------------------------------------------
# decay fits

def _slope(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


def fit_time_decay(traj: Trajectory, params: ModelParams, exps: ExponentSet | None = None,
                   *, t_min: float | None = None, rel_tol: float = 0.1,
                   min_snapshots: int = 10) -> PropertyReport:
    """Late-time slope of ``log ‖u‖∞`` against ``log t`` and the smoothing bound.

    The window defaults to ``t ≥ t_last / 4``. The smoothing bound
    ``‖u(t)‖∞ ≤ C t^{-α} M^{γ}`` is asserted with ``C`` the smallest constant
    valid over the whole run.
    """
    exps = exps or derive_exponents(params)
    t = np.asarray(traj.times, dtype=float)
    linf = np.array([float(np.max(np.abs(u.values))) for u in traj.snapshots])
    t_min = t[-1] / 4.0 if t_min is None else t_min
    sel = (t >= t_min) & (t > 0) & (linf > 0)
    if int(np.sum(sel)) < min_snapshots:
        raise WindowError(f"decay window holds {int(np.sum(sel))} snapshots, need {min_snapshots}")
    slope, _ = _slope(np.log(t[sel]), np.log(linf[sel]))
    target = -params.d * exps.beta
    ok_rate = abs(slope - target) <= rel_tol * abs(target)

    M = abs(mass(traj.snapshots[0]))
    pos = (t > 0) & (linf > 0)
    ratio = linf[pos] * t[pos] ** exps.alpha_smooth / M ** exps.gamma_smooth
    C = float(np.max(ratio)) if ratio.size else 0.0
    bound = C * t[pos] ** (-exps.alpha_smooth) * M ** exps.gamma_smooth
    ok_bound = bool(np.all(linf[pos] <= bound * (1 + 1e-12)))
    return PropertyReport(
        "time_decay", bool(ok_rate and ok_bound),
        {"slope": slope, "target": target, "smoothing_C": C,
         "window": [float(t[sel][0]), float(t[sel][-1])], "snapshots": int(np.sum(sel))},
        rel_tol, "uniform decay at the similarity rate")


def default_tail_window(F: Profile) -> tuple[float, float]:
    """``[max(R/4, 4 r_half), R/2]`` where ``r_half`` is the half-maximum radius."""
    r = F.domain.radii
    v = F.values
    R = F.domain.R
    peak = float(np.max(v))
    below = np.flatnonzero(v <= 0.5 * peak)
    r_half = float(r[below[0]]) if below.size else R
    return max(R / 4.0, 4.0 * r_half), R / 2.0


def fit_tail_decay(F: Profile, exps: ExponentSet | None = None,
                   window: tuple[float, float] | None = None, *, rel_tol: float = 0.1,
                   min_nodes: int = 10) -> PropertyReport:
    """Tail exponent of a profile; the critical regime reports the log power ``κ``."""
    exps = exps or F.exps
    params = F.params
    lo, hi = window or default_tail_window(F)
    if hi > F.domain.R / 2 * (1 + 1e-12):
        raise WindowError("tail window must end within half the truncation radius")
    r = F.domain.radii
    v = F.values
    sel = (r >= lo) & (r <= hi) & (v > 0)
    if int(np.sum(sel)) < min_nodes:
        raise WindowError(f"tail window [{lo:.4g}, {hi:.4g}] holds {int(np.sum(sel))} nodes, "
                          f"need {min_nodes}")
    lr = np.log(r[sel])
    lf = np.log(v[sel])
    slope, _ = _slope(lr, lf)
    target = -exps.tail_exponent
    measured = {"slope": slope, "target": target, "window": [float(lo), float(hi)],
                "nodes": int(np.sum(sel))}
    if exps.regime == DecayRegime.CRITICAL:
        if lo <= 1.0:
            raise WindowError("critical fit needs the window beyond r = 1")
        kappa, _ = _slope(np.log(lr), lf + (params.d + params.sp) * lr)
        measured["kappa"] = kappa
        return PropertyReport("tail_decay", None, measured, rel_tol,
                              "decay at infinity (critical case, log power reported)")
    ok = abs(slope - target) <= rel_tol * abs(target)
    return PropertyReport("tail_decay", bool(ok), measured, rel_tol, "decay at infinity")


# --------------------------------------------------------------------------
# dissipation

def crossing_dissipation(u1, u2, table: KernelTable, m: float) -> float:
    """Discrete ``I``: pairs with exactly one point in ``{u1 > u2}``; outside the grid
    both solutions vanish, so exterior points count as not above."""
    v1 = odd_power(np.asarray(u1, dtype=float), m)
    v2 = odd_power(np.asarray(u2, dtype=float), m)
    above = (np.asarray(u1) > np.asarray(u2)).astype(np.uint8)
    return float(_backend.kernels.crossing_dissipation(
        table.K, table.E, table.domain.weights, np.ascontiguousarray(v1), np.ascontiguousarray(v2),
        above, table.p, _backend.threads()))


def dissipation_report(traj1: Trajectory, traj2: Trajectory, table: KernelTable,
                       m: float | None = None) -> PropertyReport:
    """``I ≥ 0``, ``I > 0`` exactly on crossings, and the dissipative estimate

    ``‖(u1-u2)^+(t_k)‖ ≤ ‖(u1-u2)^+(t_0)‖ - ½ Σ Δt_j I(t_j)`` (implicit in time).
    """
    _same_grid(traj1, traj2)
    if not table.domain.same_as(traj1.domain):
        raise GridMismatch("kernel table does not match the trajectories")
    m = traj1.m if m is None else m
    w = traj1.domain.weights
    has_exterior = bool(np.any(table.E))
    I = []
    sign_ok = True
    for a, b in zip(traj1.snapshots, traj2.snapshots):
        val = crossing_dissipation(a.values, b.values, table, m)
        above = a.values > b.values
        crossing = bool(np.any(above)) and (has_exterior or not bool(np.all(above)))
        sign_ok &= val >= 0.0 and ((val > 0.0) == crossing)
        I.append(val)
    I = np.array(I)
    pos = np.array([float(np.dot(w, np.maximum(a.values - b.values, 0.0)))
                    for a, b in zip(traj1.snapshots, traj2.snapshots)])
    dt = np.diff(traj1.times)
    credit = np.concatenate([[0.0], np.cumsum(0.5 * dt * I[1:])])
    slack = SLACK_PER_STEP * traj1.newton_tol * np.arange(len(pos))
    excess = pos - (pos[0] - credit)
    ok = bool(np.all(excess <= slack))
    return PropertyReport(
        "dissipation", bool(sign_ok and ok),
        {"min_I": float(np.min(I)), "max_I": float(np.max(I)), "sign_pattern_ok": bool(sign_ok),
         "max_excess": float(np.max(excess))},
        float(slack[-1]), "refined L1 dissipation", {"I": I.tolist()})


# --------------------------------------------------------------------------
# uniqueness

def uniqueness_probe(params: ModelParams, M: float, cfg: StepConfig, k_schedule,
                     grid: ExtractionGrid = ExtractionGrid(), *, t_star: float = 1.0,
                     tol: float = 0.05, check_mass: bool = True, workers: int = 1) -> list[PropertyReport]:
    """Box against cosine-bump extraction, and mass rescaling against direct extraction."""
    ks = sorted(float(k) for k in k_schedule)
    box = extract_barenblatt(params, M, ks, cfg, grid, t_star=t_star, shape="box",
                             workers=workers, strict=False)
    bump = extract_barenblatt(params, M, ks, cfg, grid, t_star=t_star, shape="bump",
                              workers=workers, strict=False)
    dists = [profile_distance(a, b) for a, b in zip(box.meta["profiles"], bump.meta["profiles"])]
    shrink = all(b2 < a2 for a2, b2 in zip(dists, dists[1:]))
    reports = [PropertyReport("uniqueness_shape", bool(shrink and dists[-1] < tol),
                              {"distances": dists, "final": dists[-1]}, tol,
                              "uniqueness of the fundamental solution")]
    if check_mass:
        unit = bump if math.isclose(M, 1.0) else extract_barenblatt(
            params, 1.0, ks, cfg, grid, t_star=t_star, shape="bump", workers=workers, strict=False)
        double = extract_barenblatt(params, 2.0, ks, cfg, grid, t_star=t_star, shape="bump",
                                    workers=workers, strict=False)
        scaled = rescale_profile_mass(unit, 2.0, double.domain)
        d = profile_distance(scaled, double)
        reports.append(PropertyReport("uniqueness_mass_rescaling", bool(d < tol), {"distance": d}, tol,
                                      "mass rescaling of the fundamental solution"))
    return reports


# --------------------------------------------------------------------------
# energy estimate

def energy_estimate_check(traj: Trajectory, table: KernelTable, q: float,
                          m: float | None = None) -> PropertyReport:
    """Discrete energy estimate for the test function ``u^q``.

    With ``ξ_k = u_{k}^q`` the implicit scheme gives
    ``Σ Δt <A v_k, ξ_k> ≤ (‖u(t_1)‖^{q+1} - ‖u(t_2)‖^{q+1})/(q+1)`` by convexity.
    For ``q = m`` the secant slope of ``|u|^{q+1}/(q+1)`` between successive
    snapshots replaces ``u^q``, which turns the estimate into an identity.
    """
    m = traj.m if m is None else m
    if q < 0:
        raise ValueError("q must be nonnegative")
    bad = [k for k, d in enumerate(traj.diagnostics) if d["final_residual"] > traj.newton_tol]
    if bad:
        raise QualityError(f"steps {bad[:5]} exceed the solver tolerance")
    w = traj.domain.weights

    def F(u):
        return np.abs(u) ** (q + 1.0) / (q + 1.0)

    equality = math.isclose(q, m)
    lhs = 0.0
    for k in range(1, len(traj.times)):
        u_old = traj.snapshots[k - 1].values
        u_new = traj.snapshots[k].values
        if equality:
            du = u_new - u_old
            safe = np.where(du != 0.0, du, 1.0)
            xi = np.where(du != 0.0, (F(u_new) - F(u_old)) / safe, odd_power(u_new, q))
        else:
            xi = odd_power(u_new, q)
        lhs += (traj.times[k] - traj.times[k - 1]) * weak_pairing(odd_power(u_new, m), xi, table)
    rhs = float(np.dot(w, F(traj.snapshots[0].values)) - np.dot(w, F(traj.snapshots[-1].values)))
    slack = _slack(traj)
    gap = lhs - rhs
    ok = abs(gap) <= slack if equality else gap <= slack
    return PropertyReport(f"energy_estimate_q{q:g}", bool(ok),
                          {"pairing_integral": lhs, "norm_drop": rhs, "gap": gap, "equality": equality},
                          slack, "energy dissipation estimate")
