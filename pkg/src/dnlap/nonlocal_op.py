"""The doubly nonlinear nonlocal operator, its energy and its weak form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainMismatch
from .grid import Field
from .kernel import KernelTable


def odd_power(a, q: float):
    """Sign-preserving power ``|a|^{q-1} a`` (zero at zero). Works on scalars and arrays."""
    a_arr = np.asarray(a, dtype=float)
    out = np.zeros_like(a_arr)
    nz = a_arr != 0.0
    out[nz] = np.sign(a_arr[nz]) * np.exp(q * np.log(np.abs(a_arr[nz])))
    if np.ndim(a) == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class OperatorOutput:
    values: Field
    epsilon_used: float


def _values(v, table: KernelTable) -> np.ndarray:
    if isinstance(v, Field):
        if not v.domain.same_as(table.domain):
            raise DomainMismatch("field and kernel table live on different domains")
        return np.ascontiguousarray(v.values)
    arr = np.ascontiguousarray(v, dtype=float)
    if arr.shape != (table.domain.n,):
        raise DomainMismatch(f"expected {table.domain.n} values, got {arr.shape}")
    return arr


def _eps_used(table: KernelTable) -> float:
    return table.epsilon if table.epsilon > 0 else table.domain.h / 2


def pv_values(v, table: KernelTable) -> np.ndarray:
    """Raw-array version of :func:`apply_pv` used inside the solvers."""
    return _backend.kernels.pv_apply(table.K, table.E, _values(v, table), table.p, _backend.threads())


def apply_pv(v, table: KernelTable) -> OperatorOutput:
    out = pv_values(v, table)
    return OperatorOutput(Field(table.domain, out), _eps_used(table))


def apply_doubly_nonlinear(u, table: KernelTable, m: float) -> OperatorOutput:
    return apply_pv(odd_power(_values(u, table), m), table)


def seminorm_p(v, table: KernelTable) -> float:
    """Discrete ``[v]_{s,p}^p`` including both exterior slots of the double integral."""
    vals = _values(v, table)
    return _backend.kernels.pair_energy(table.K, table.E, table.domain.weights, vals,
                                        table.p, _backend.threads())


def energy(v, table: KernelTable) -> float:
    """Gagliardo energy ``[v]^p / 2p``."""
    return seminorm_p(v, table) / (2.0 * table.p)


def weak_pairing(v, xi, table: KernelTable) -> float:
    """``½ ∬ (v(x)-v(y))^{p-1} (ξ(x)-ξ(y)) K`` plus exterior terms.

    Equals ``Σ w_i apply_pv(v)_i ξ_i`` whenever ``w_i K_ij`` is symmetric, and
    ``weak_pairing(v, v) = seminorm_p(v) / 2``.
    """
    a = _values(v, table)
    b = _values(xi, table)
    return _backend.kernels.pair_pairing(table.K, table.E, table.domain.weights, a, b,
                                         table.p, _backend.threads())


def pv_jacobian(v, table: KernelTable, floor: float = 1e-12) -> np.ndarray:
    """Nodal Jacobian of :func:`pv_values`, with ``|δ|^{p-2}`` floored for ``p < 2``."""
    return _backend.kernels.pv_jacobian(table.K, table.E, _values(v, table), table.p,
                                        floor, _backend.threads())
