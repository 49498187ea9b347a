"""Resolvent solver and implicit Euler marching.

One step solves ``u + λ A(u^m) = f``. With ``v = u^m`` this is the first-order
condition of the strictly convex functional

    Ψ(v) = Σ w_i (m/(m+1)) |v_i|^{(m+1)/m} + λ/(2p) [v]^p - Σ w_i f_i v_i,

whose weighted gradient is ``v^{1/m} + λ A v - f``. Ψ is minimised by damped
Newton with backtracking. When the line search collapses and Ψ is
sub-quadratic (``p <= 2``, ``m >= 1``) a reweighted majorise-minimise step is
taken instead; a diagonally preconditioned gradient step covers a Newton
direction that fails to descend. For ``p < 2`` a Newton polish with near-equal
values merged resolves ties that round-off would otherwise split.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .errors import ConfigError, NonConvergence
from .grid import Field, lq_norm, mass
from .kernel import KernelTable
from .nonlocal_op import energy, odd_power, pv_jacobian, pv_values, seminorm_p

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepConfig:
    """Time grid and inner-solver settings.

    ``schedule="geometric"`` steps ``0 -> t0`` once and then geometrically up to
    ``t1`` (``steps`` solves in total). ``schedule="uniform"`` takes ``steps``
    steps of size ``dt`` starting at ``t0``.
    """

    schedule: str = "geometric"
    t0: float = 1e-3
    t1: float = 10.0
    steps: int = 200
    dt: float | None = None
    newton_tol: float = 1e-10
    max_newton: int = 100
    ls_shrink: float = 0.5
    jac_floor: float = 1e-12

    def __post_init__(self):
        if self.schedule not in ("geometric", "uniform"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1:
            raise ConfigError("need at least one step")
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive")
        if not 0.0 < self.ls_shrink < 1.0:
            raise ConfigError("ls_shrink must lie in (0, 1)")
        if self.schedule == "geometric" and not 0.0 < self.t0 < self.t1:
            raise ConfigError("geometric schedule needs 0 < t0 < t1")
        if self.schedule == "uniform" and not (self.dt and self.dt > 0):
            raise ConfigError("uniform schedule needs dt > 0")

    def times(self) -> np.ndarray:
        """Snapshot times, starting with the initial time."""
        if self.schedule == "geometric":
            return np.concatenate([[0.0], np.geomspace(self.t0, self.t1, self.steps)])
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    residual_sup: float
    fallback_steps: int = 0
    polished: bool = False


def _residual_norms(r: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sup = float(np.max(np.abs(r))) if r.size else 0.0
    l2 = math.sqrt(float(np.dot(w, r * r)))
    l1 = float(np.dot(w, np.abs(r)))
    return max(sup, l2, l1), sup


def resolvent_solve(f, lam: float, table: KernelTable, m: float, cfg: StepConfig,
                    v0: np.ndarray | None = None) -> tuple[np.ndarray, SolveInfo]:
    """Return the nodal values of ``u = J_λ f`` and solver diagnostics.

    The reported residual is the largest of the nodal sup, weighted L¹ and
    weighted L² norms of ``u + λ A(u^m) - f``.
    """
    fv = np.ascontiguousarray(f.values if isinstance(f, Field) else f, dtype=float)
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    if lam == 0.0 or not np.any(fv):
        return fv.copy(), SolveInfo(0, 0.0, 0.0)

    # A is homogeneous of degree m(p-1) in u, so with u = σ ũ and σ = max |f|
    # the step becomes ũ + λ σ^{m(p-1)-1} A(ũ^m) = f / σ; residuals scale by σ
    sigma = float(np.max(np.abs(fv)))
    if sigma != 1.0:
        v_in = odd_power(fv, m) if v0 is None else np.asarray(v0, dtype=float)
        g_in = odd_power(v_in, 1.0 / m) + lam * pv_values(v_in, table) - fv
        res_in, sup_in = _residual_norms(g_in, table.domain.weights)
        if res_in <= cfg.newton_tol:
            return odd_power(v_in, 1.0 / m), SolveInfo(0, res_in, sup_in)
        scaled = dataclasses.replace(cfg, newton_tol=cfg.newton_tol / sigma)
        v0s = None if v0 is None else np.asarray(v0, dtype=float) / sigma ** m
        u, info = resolvent_solve(fv / sigma, lam * sigma ** (m * (table.p - 1.0) - 1.0), table, m,
                                  scaled, v0s)
        info.residual *= sigma
        info.residual_sup *= sigma
        return u * sigma, info

    w = table.domain.weights
    p = table.p
    inv_m = 1.0 / m
    expo = (m + 1.0) / m
    coef = m / (m + 1.0)
    tol = cfg.newton_tol

    def grad(v):
        return odd_power(v, inv_m) + lam * pv_values(v, table) - fv

    def psi(v):
        a = coef * float(np.dot(w, np.abs(v) ** expo))
        b = lam / (2.0 * p) * seminorm_p(v, table)
        c = float(np.dot(w, fv * v))
        return a + b - c, 1e-14 * (a + b + abs(c))

    v = odd_power(fv, m) if v0 is None else np.array(v0, dtype=float)
    g = grad(v)
    res, sup = _residual_norms(g, w)
    obj, noise = psi(v)
    n_grad = 0
    # for p <= 2 and m >= 1 every term of Ψ is at most quadratic, so the
    # reweighted quadratic model majorises Ψ and its minimiser always descends
    mm_ok = p <= 2.0 and m >= 1.0
    min_alpha = 2.0 ** -6 if mm_ok else 0.0
    for it in range(1, cfg.max_newton + 1):
        if res <= tol:
            return odd_power(v, inv_m), SolveInfo(it - 1, res, sup, n_grad)
        if p < 2.0 and it % POLISH_EVERY == 0:
            tied = _tied_newton(v, grad, psi, w, table, lam, inv_m, cfg)
            if tied is not None:
                return odd_power(tied[0], inv_m), SolveInfo(it, tied[1], tied[2], n_grad, True)
        av = np.maximum(np.abs(v), cfg.jac_floor) ** (inv_m - 1.0)
        Jpv = lam * pv_jacobian(v, table, cfg.jac_floor)
        J = Jpv.copy()
        J[np.diag_indices_from(J)] += inv_m * av
        direction = _sym_solve(w, J, g)
        slope = float(np.dot(w * g, direction)) if direction is not None else 0.0
        if direction is None or slope >= 0.0:
            direction = -g / np.diag(J)
            slope = float(np.dot(w * g, direction))
            n_grad += 1

        alpha = 1.0
        accepted = False
        while alpha >= max(min_alpha, 1e-18):
            trial = v + alpha * direction
            obj_t, noise_t = psi(trial)
            g_t = grad(trial)
            res_t, sup_t = _residual_norms(g_t, w)
            if -alpha * slope > noise:
                ok = obj_t <= obj + 1e-4 * alpha * slope
            else:
                # predicted decrease is below the round-off of Ψ: require the
                # residual to drop and Ψ not to rise measurably
                ok = res_t < res and obj_t <= obj + noise
            if ok:
                accepted = True
                break
            alpha *= cfg.ls_shrink
        if mm_ok and (not accepted or alpha < 1.0 or res_t >= res):
            # Newton oscillates across vanishing differences when p < 2; the
            # majorise-minimise step descends without a line search
            Jmm = Jpv / (p - 1.0)
            Jmm[np.diag_indices_from(Jmm)] += av
            step = _sym_solve(w, Jmm, g)
            if step is not None:
                trial_mm = v + step
                g_mm = grad(trial_mm)
                res_mm, sup_mm = _residual_norms(g_mm, w)
                if np.isfinite(res_mm) and (not accepted or res_mm < res_t):
                    trial, g_t, res_t, sup_t = trial_mm, g_mm, res_mm, sup_mm
                    obj_t, noise_t = psi(trial)
                    accepted = True
                    n_grad += 1
        log.debug("iter %d res %.3e alpha %.3g accepted %s fallback %d", it, res, alpha, accepted, n_grad)
        if not accepted:
            raise NonConvergence(f"line search exhausted at iteration {it}", residual=res)
        v, g, res, sup, obj, noise = trial, g_t, res_t, sup_t, obj_t, noise_t
    if res <= tol:
        return odd_power(v, inv_m), SolveInfo(cfg.max_newton, res, sup, n_grad)
    raise NonConvergence(f"no convergence in {cfg.max_newton} iterations", residual=res)


POLISH_EVERY = 8
TIE_WINDOWS = (2.0 ** 12, 2.0 ** 20, 2.0 ** 26)


def tie_labels(v: np.ndarray, ulps: float) -> np.ndarray:
    """Cluster labels of values agreeing to ``ulps`` units of ``max |v|``."""
    thr = ulps * np.finfo(float).eps * float(np.max(np.abs(v)))
    order = np.argsort(v, kind="stable")
    new = np.concatenate([[0], (np.diff(v[order]) > thr).astype(int)])
    labels = np.empty(v.size, dtype=int)
    labels[order] = np.cumsum(new)
    return labels


def _tied_newton(v, grad, psi, w, table, lam, inv_m, cfg):
    """Try :func:`_tied_newton_at` with widening tie windows."""
    seen = -1
    for ulps in TIE_WINDOWS:
        labels = tie_labels(v, ulps)
        nc = int(labels.max()) + 1
        if nc == v.size or nc == seen:
            continue
        seen = nc
        out = _tied_newton_at(v, labels, grad, psi, w, table, lam, inv_m, cfg)
        if out is not None:
            return out
    return None


def _tied_newton_at(v, labels, grad, psi, w, table, lam, inv_m, cfg, iters: int = 20):
    """Newton on Ψ restricted to ``v`` constant on clusters of near-equal values.

    For ``p < 2`` the flux ``|a|^{p-2} a`` magnifies differences of a few ulps
    between values that should coincide (mirror nodes, say) into residuals far
    above the tolerance. Merging them keeps the ties exact; the full residual
    decides acceptance. Returns ``(v, res, sup)`` or ``None``.
    """
    nc = int(labels.max()) + 1
    n = v.size
    P = sparse.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, nc))
    wc = P.T @ w
    v = ((P.T @ (w * v)) / wc)[labels]
    g = grad(v)
    res, sup = _residual_norms(g, w)
    obj, noise = psi(v)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    for _ in range(iters):
        if res <= cfg.newton_tol:
            return v, res, sup
        J = lam * pv_jacobian(v, table, cfg.jac_floor)
        # couplings inside a cluster carry no flux; drop them from both sides
        J[np.diag_indices_from(J)] += np.where(same, J, 0.0).sum(axis=1)
        J[same] = 0.0
        J[np.diag_indices_from(J)] += inv_m * np.maximum(np.abs(v), cfg.jac_floor) ** (inv_m - 1.0)
        H = np.asarray(P.T @ (P.T @ (w[:, None] * J)).T)
        H = 0.5 * (H + H.T)
        gr = P.T @ (w * g)
        try:
            d = -linalg.cho_solve(linalg.cho_factor(H, check_finite=False), gr, check_finite=False)
        except linalg.LinAlgError:
            log.debug("tied polish: reduced system not positive definite")
            return None
        step = d[labels]
        slope = float(np.dot(w * g, step))
        if not np.all(np.isfinite(step)) or slope >= 0.0:
            log.debug("tied polish: no descent (slope %.3e)", slope)
            return None
        alpha = 1.0
        while alpha >= 2.0 ** -10:
            trial = v + alpha * step
            obj_t, noise_t = psi(trial)
            g_t = grad(trial)
            res_t, sup_t = _residual_norms(g_t, w)
            if (obj_t <= obj + 1e-4 * alpha * slope) if -alpha * slope > noise else \
                    (res_t < res and obj_t <= obj + noise):
                break
            alpha *= 0.5
        else:
            log.debug("tied polish: line search failed at res %.3e", res)
            return None
        log.debug("tied polish: res %.3e alpha %.3g", res_t, alpha)
        v, g, res, sup, obj, noise = trial, g_t, res_t, sup_t, obj_t, noise_t
    return (v, res, sup) if res <= cfg.newton_tol else None


def _sym_solve(w, J, g):
    """Solve the symmetrised weighted system ``(W J) d = -W g`` by Cholesky."""
    H = w[:, None] * J
    H = 0.5 * (H + H.T)
    try:
        cf = linalg.cho_factor(H, check_finite=False)
        d = -linalg.cho_solve(cf, w * g, check_finite=False)
    except linalg.LinAlgError:
        return None
    return d if np.all(np.isfinite(d)) else None


def resolvent(f: Field, lam: float, table: KernelTable, m: float, solver: StepConfig) -> Field:
    u, _ = resolvent_solve(f, lam, table, m, solver)
    return Field(f.domain, u)


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list
    diagnostics: list = dc_field(default_factory=list)
    newton_tol: float = 1e-10
    m: float = 1.0

    @property
    def domain(self):
        return self.snapshots[0].domain

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    def write_csv(self, directory) -> None:
        directory = Path(directory)
        nodes = self.domain.nodes
        with open(directory / "snapshots.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "t", "node", "x", "u"])
            for k, (t, snap) in enumerate(zip(self.times, self.snapshots)):
                for i, (x, u) in enumerate(zip(nodes, snap.values)):
                    wr.writerow([k, f"{t:.17g}", i, f"{x:.17g}", f"{u:.17g}"])
        with open(directory / "diagnostics.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "t", "newton_iters", "residual", "mass", "linf", "energy"])
            for k, (t, dg) in enumerate(zip(self.times, self.diagnostics)):
                wr.writerow([k, f"{t:.17g}", dg["newton_iters"], f"{dg['final_residual']:.17g}",
                             f"{dg['mass']:.17g}", f"{dg['linf']:.17g}", f"{dg['energy']:.17g}"])


def _diag(u: np.ndarray, f: Field, table: KernelTable, m: float, iters: int, res: float) -> dict:
    snap = Field(f.domain, u)
    return {
        "newton_iters": iters,
        "final_residual": res,
        "energy": energy(odd_power(u, m), table),
        "mass": mass(snap),
        "linf": lq_norm(snap, math.inf),
    }


def march(u0: Field, cfg: StepConfig, table: KernelTable, m: float, *, times=None) -> Trajectory:
    """Implicit Euler from ``u0``: ``u_{k+1} = J_{Δt_k} u_k``."""
    if not u0.domain.same_as(table.domain):
        from .errors import DomainMismatch

        raise DomainMismatch("initial datum and kernel table live on different domains")
    times = cfg.times() if times is None else np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ConfigError("time grid must be strictly increasing")
    snaps = [u0]
    diags = [_diag(u0.values, u0, table, m, 0, 0.0)]
    u = u0.values
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        try:
            u_new, info = resolvent_solve(u, dt, table, m, cfg)
        except NonConvergence as exc:
            raise NonConvergence(f"step {k}: {exc}", residual=exc.residual, step=k) from exc
        u = u_new
        snaps.append(Field(u0.domain, u))
        diags.append(_diag(u, u0, table, m, info.iterations, info.residual))
    return Trajectory(times, snaps, diags, newton_tol=cfg.newton_tol, m=m)
