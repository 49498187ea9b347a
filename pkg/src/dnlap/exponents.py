"""Model parameters, derived scaling exponents and the tail decay law."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum

from .errors import ConfigError, DegenerateError, DomainError, RegimeError

REGIME_TOL = 1e-9
DEGENERATE_TOL = 1e-12


class DecayRegime(str, Enum):
    SUBLINEAR = "sublinear"
    CRITICAL = "critical"
    SUPERLINEAR = "superlinear"


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of ``u_t + (-Δ_p)^s u^m = 0`` in dimension ``d``."""

    d: int
    s: float
    p: float
    m: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d!r}")
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"s must lie in (0, 1), got {self.s!r}")
        if not self.p > 1.0:
            raise ConfigError(f"p must exceed 1, got {self.p!r}")
        if not self.m > 0.0:
            raise ConfigError(f"m must be positive, got {self.m!r}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def homogeneity(self) -> float:
        """Order ``m(p-1)`` of the composed operator."""
        return self.m * (self.p - 1.0)


@dataclass(frozen=True)
class ExponentSet:
    beta: float
    d_beta: float
    p_mc: float
    p_one: float
    q_s: float
    alpha_smooth: float
    gamma_smooth: float
    tail_exponent: float
    log_power: float
    regime: DecayRegime

    def to_dict(self) -> dict:
        out = asdict(self)
        out["regime"] = self.regime.value
        out["q_s"] = "inf" if math.isinf(self.q_s) else self.q_s
        return out


def critical_exponent(d: int, s: float, m: float) -> float:
    """Threshold ``d(1+m)/(md+s)`` below which the similarity exponent is not positive."""
    return d * (1.0 + m) / (m * d + s)


def _p_one_quadratic(q, d, s, m):
    return (s * q + d) * m * (q - 1.0) - d


def transition_exponent(d: int, s: float, m: float, tol: float = 1e-13) -> float:
    """Positive root of ``(s q + d) m (q - 1) = d`` found by bisection.

    The quadratic is ``-d`` at ``q = 1`` and ``s(1 + 1/m) > 0`` at ``q = 1 + 1/m``,
    so the bracket always holds.
    """
    lo, hi = 1.0 + 1e-9, 1.0 + 1.0 / m - 1e-9
    flo = _p_one_quadratic(lo, d, s, m)
    if flo >= 0.0 or _p_one_quadratic(hi, d, s, m) <= 0.0:
        raise RuntimeError("transition exponent bracket lost")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = _p_one_quadratic(mid, d, s, m)
        if fmid == 0.0:
            return mid
        if (fmid < 0.0) == (flo < 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _regime_of(p: float, p_one: float) -> DecayRegime:
    if abs(p - p_one) <= REGIME_TOL:
        return DecayRegime.CRITICAL
    if p > p_one:
        return DecayRegime.SUPERLINEAR
    return DecayRegime.SUBLINEAR


def derive_exponents(params: ModelParams) -> ExponentSet:
    d, s, p, m = params.d, params.s, params.p, params.m
    p_mc = critical_exponent(d, s, m)
    if p <= p_mc:
        raise RegimeError(f"p = {p} must exceed the critical exponent p_mc = {p_mc:.12g}")
    if abs(params.homogeneity - 1.0) <= DEGENERATE_TOL:
        raise DegenerateError("m(p-1) = 1 has no finite similarity time exponent")
    if abs(p - d / s) <= DEGENERATE_TOL:
        raise DegenerateError("p = d/s leaves the Sobolev exponent unconstrained; not supported")

    beta = 1.0 / (d * (params.homogeneity - 1.0) + params.sp)
    if p < d / s:
        q_s = 1.0 / (1.0 / p - s / d)
        p_over_q = p / q_s
    else:
        q_s = math.inf
        p_over_q = 0.0
    denom = params.homogeneity - p_over_q
    alpha_smooth = 1.0 / denom
    gamma_smooth = (1.0 - p_over_q) / denom

    p_one = transition_exponent(d, s, m)
    regime = _regime_of(p, p_one)
    if regime is DecayRegime.SUBLINEAR:
        tail, log_power = params.sp / (1.0 - params.homogeneity), 0.0
    else:
        tail = d + params.sp
        log_power = 1.0 if regime is DecayRegime.CRITICAL else 0.0

    return ExponentSet(
        beta=beta,
        d_beta=d * beta,
        p_mc=p_mc,
        p_one=p_one,
        q_s=q_s,
        alpha_smooth=alpha_smooth,
        gamma_smooth=gamma_smooth,
        tail_exponent=tail,
        log_power=log_power,
        regime=regime,
    )


def classify_regime(params: ModelParams, exps: ExponentSet | None = None) -> DecayRegime:
    p_mc = critical_exponent(params.d, params.s, params.m)
    if params.p <= p_mc:
        raise RegimeError(f"p = {params.p} must exceed p_mc = {p_mc:.12g}")
    p_one = exps.p_one if exps is not None else transition_exponent(params.d, params.s, params.m)
    return _regime_of(params.p, p_one)


def decay_g(r: float, params: ModelParams, exps: ExponentSet) -> float:
    """Tail law of the profile: power, power times log, or the slow sublinear power."""
    if not r > 0.0:
        raise DomainError(f"decay_g needs r > 0, got {r}")
    regime = exps.regime
    if regime is DecayRegime.SUBLINEAR:
        return r ** (-exps.tail_exponent)
    base = r ** (-(params.d + params.sp))
    if regime is DecayRegime.CRITICAL:
        if r <= 1.0:
            raise DomainError(f"critical decay law needs r > 1, got {r}")
        return base * math.log(r)
    return base
