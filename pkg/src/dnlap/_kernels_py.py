"""Pure-numpy versions of the dense pair kernels.

These are the reference implementations; ``_kernels_cy`` mirrors them with
explicit loops. All routines take a row-major ``K`` of shape (n, n), the
exterior weights ``E`` of shape (n,), and return new arrays.
"""
import numpy as np


def _opow(a, q):
    return np.sign(a) * np.abs(a) ** q


def pv_apply(K, E, v, p, threads=0):
    diff = v[:, None] - v[None, :]
    return np.sum(K * _opow(diff, p - 1.0), axis=1) + E * _opow(v, p - 1.0)


def pv_jacobian(K, E, v, p, floor, threads=0):
    """Nodal Jacobian of ``pv_apply`` with ``|δ|^{p-2}`` floored at ``floor``."""
    diff = np.abs(v[:, None] - v[None, :])
    e = p - 2.0
    if e < 0.0:
        diff = np.maximum(diff, floor)
    c = (p - 1.0) * K * diff**e
    np.fill_diagonal(c, 0.0)
    av = np.abs(v)
    if e < 0.0:
        av = np.maximum(av, floor)
    J = -c
    J[np.diag_indices_from(J)] = c.sum(axis=1) + (p - 1.0) * E * av**e
    return J


def pair_energy(K, E, w, v, p, threads=0):
    """``Σ_i w_i Σ_j K_ij |v_i - v_j|^p + 2 Σ_i w_i E_i |v_i|^p``."""
    diff = np.abs(v[:, None] - v[None, :]) ** p
    return float(np.dot(w, np.sum(K * diff, axis=1)) + 2.0 * np.dot(w, E * np.abs(v) ** p))


def pair_pairing(K, E, w, v, xi, p, threads=0):
    """``½ Σ_ij w_i K_ij (v_i - v_j)^{p-1} (ξ_i - ξ_j) + Σ_i w_i E_i v_i^{p-1} ξ_i``."""
    dv = _opow(v[:, None] - v[None, :], p - 1.0)
    dx = xi[:, None] - xi[None, :]
    return float(0.5 * np.dot(w, np.sum(K * dv * dx, axis=1)) + np.dot(w, E * _opow(v, p - 1.0) * xi))


def crossing_dissipation(K, E, w, v1, v2, above, p, threads=0):
    """Dissipation over pairs where exactly one node lies in ``above``.

    ``above`` is a boolean array marking ``u1 > u2``; the exterior counts as
    not-above.
    """
    a = above.astype(bool)
    d1 = _opow(v1[:, None] - v1[None, :], p - 1.0)
    d2 = _opow(v2[:, None] - v2[None, :], p - 1.0)
    mask = a[:, None] != a[None, :]
    inner = np.dot(w, np.sum(np.where(mask, K * np.abs(d1 - d2), 0.0), axis=1))
    ext = 2.0 * np.dot(w[a], E[a] * np.abs(_opow(v1[a], p - 1.0) - _opow(v2[a], p - 1.0)))
    return float(inner + ext)
