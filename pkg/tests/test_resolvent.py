import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import optimize

from dnlap.errors import ConfigError, DomainMismatch, NonConvergence
from dnlap.exponents import ModelParams
from dnlap.grid import FULL_LINE, RADIAL, box_of_mass, build_domain, cosine_bump, lq_norm, mass, positive_part_integral
from dnlap.kernel import assemble_kernel
from dnlap.nonlocal_op import odd_power
from dnlap.resolvent import StepConfig, march, resolvent, resolvent_solve, tie_labels

from conftest import CONFIG_A, CONFIG_B

CFG = StepConfig(t0=1e-3, t1=1.0, steps=20)


def _psi_oracle(v, f, lam, table, m):
    """Ψ by explicit double loops over the raw table."""
    K, E, w, p = table.K, table.E, table.domain.weights, table.p
    n = len(v)
    pair = 0.0
    for i in range(n):
        for j in range(n):
            pair += w[i] * K[i, j] * abs(v[i] - v[j]) ** p
        pair += 2.0 * w[i] * E[i] * abs(v[i]) ** p
    local = sum(w[i] * (m / (m + 1)) * abs(v[i]) ** ((m + 1) / m) - w[i] * f[i] * v[i] for i in range(n))
    return local + lam / (2 * p) * pair


def _coordinate_search(f, lam, table, m, tol=1e-12):
    v = odd_power(f, m).copy()
    for _ in range(5000):
        change = 0.0
        for i in range(len(v)):
            def obj(x, i=i):
                trial = v.copy()
                trial[i] = x
                return _psi_oracle(trial, f, lam, table, m)
            lo, hi = v[i] - 1.0, v[i] + 1.0
            x = optimize.minimize_scalar(obj, bracket=(lo, v[i], hi), tol=1e-14).x
            change = max(change, abs(x - v[i]))
            v[i] = x
        if change < tol:
            break
    return odd_power(v, 1.0 / m)


@pytest.mark.parametrize("m, p", [(1.0, 3.0), (2.0, 3.0), (1.0, 2.5)])
def test_brute_force_minimiser(m, p, rng):
    dom = build_domain(FULL_LINE, 1, 3.0, 6, min_nodes=6)
    table = assemble_kernel(dom, 0.0, ModelParams(1, 0.5, p, m))
    f = rng.uniform(-1, 1, 6)
    u, info = resolvent_solve(f, 0.1, table, m, StepConfig(newton_tol=1e-12))
    oracle = _coordinate_search(f, 0.1, table, m)
    np.testing.assert_allclose(u, oracle, atol=1e-6)
    assert info.residual <= 1e-12


def test_identity_and_zero(rng):
    dom = build_domain(FULL_LINE, 1, 4.0, 32)
    table = assemble_kernel(dom, 0.0, CONFIG_A)
    f = dom.field(rng.normal(size=32))
    np.testing.assert_array_equal(resolvent(f, 0.0, table, 1.0, CFG).values, f.values)
    assert np.all(resolvent(dom.zeros(), 0.5, table, 1.0, CFG).values == 0.0)
    with pytest.raises(ConfigError):
        resolvent(f, -1.0, table, 1.0, CFG)


@pytest.mark.parametrize("params, mode", [(CONFIG_A, FULL_LINE), (CONFIG_B, FULL_LINE),
                                          (ModelParams(2, 0.5, 3.0, 2.0), RADIAL)])
def test_nodal_residual(params, mode, rng):
    dom = build_domain(mode, params.d, 5.0, 64)
    table = assemble_kernel(dom, 0.0, params)
    f = np.maximum(rng.normal(size=64), 0) * (dom.radii < 2.5)
    u, info = resolvent_solve(f, 0.05, table, params.m, CFG)
    from dnlap.nonlocal_op import pv_values
    r = u + 0.05 * pv_values(odd_power(u, params.m), table) - f
    assert np.max(np.abs(r)) <= 1e-10
    assert info.residual <= 1e-10


SMALL = build_domain(FULL_LINE, 1, 4.0, 16)
SMALL_TABLES = {p: assemble_kernel(SMALL, 0.0, ModelParams(1, 0.5, p, 1.0)) for p in (1.45, 3.0)}
data = arrays(np.float64, 16, elements=st.floats(-2, 2))
SLACK = 10 * 1e-10


@pytest.mark.parametrize("p", [1.45, 3.0])
@given(f1=data, f2=data, lam=st.floats(1e-3, 1.0))
def test_resolvent_contraction(p, f1, f2, lam):
    t = SMALL_TABLES[p]
    u1 = SMALL.field(resolvent_solve(f1, lam, t, 1.0, CFG)[0])
    u2 = SMALL.field(resolvent_solve(f2, lam, t, 1.0, CFG)[0])
    F1, F2 = SMALL.field(f1), SMALL.field(f2)
    assert lq_norm(u1 - u2, 1) <= lq_norm(F1 - F2, 1) + SLACK
    assert positive_part_integral(u1, u2) <= positive_part_integral(F1, F2) + SLACK


@given(f=data, lam=st.floats(1e-3, 1.0), q=st.sampled_from([1.0, 2.0, math.inf]))
def test_resolvent_lq_nonexpansive(f, lam, q):
    t = SMALL_TABLES[3.0]
    u = SMALL.field(resolvent_solve(f, lam, t, 1.0, CFG)[0])
    assert lq_norm(u, q) <= lq_norm(SMALL.field(f), q) + SLACK


@pytest.fixture(scope="module")
def run_a():
    dom = build_domain(FULL_LINE, 1, 20.0, 128)
    table = assemble_kernel(dom, 0.0, CONFIG_A)
    u0 = box_of_mass(dom, 2.0)
    return march(u0, StepConfig(t0=1e-3, t1=5.0, steps=60), table, 1.0)


def test_march_zero():
    dom = build_domain(FULL_LINE, 1, 4.0, 32)
    tr = march(dom.zeros(), CFG, assemble_kernel(dom, 0.0, CONFIG_A), 1.0)
    assert all(np.all(s.values == 0.0) for s in tr.snapshots)
    assert len(tr.snapshots) == len(tr.times) == CFG.steps + 1


def test_march_nonnegative_and_quality(run_a):
    assert all(np.all(s.values >= 0.0) for s in run_a.snapshots)
    assert all(d["final_residual"] <= 1e-10 for d in run_a.diagnostics)
    assert np.all(np.diff(run_a.times) > 0)


def test_march_energy_nonincreasing(run_a):
    e = np.array([d["energy"] for d in run_a.diagnostics])
    assert np.all(np.diff(e[1:]) <= 1e-9)


def test_time_derivative_bound(run_a):
    h = CONFIG_A.homogeneity
    M = mass(run_a.snapshots[0].abs())
    t = run_a.times
    half = len(t) // 2
    for k in range(half, len(t) - 1):
        rate = lq_norm(run_a.snapshots[k + 1] - run_a.snapshots[k], 1) / (t[k + 1] - t[k])
        assert rate <= 1.2 * 2.0 / abs(h - 1.0) * M / t[k]


def test_trajectory_csv(run_a, tmp_path):
    run_a.write_csv(tmp_path)
    with open(tmp_path / "snapshots.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "t", "node", "x", "u"]
    assert len(rows) == 1 + len(run_a.times) * run_a.domain.n
    assert float(rows[-1][4]) == run_a.snapshots[-1].values[-1]
    with open(tmp_path / "diagnostics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "t", "newton_iters", "residual", "mass", "linf", "energy"]
    assert len(rows) == len(run_a.times) + 1


def test_sublinear_march_converges():
    dom = build_domain(FULL_LINE, 1, 20.0, 128)
    table = assemble_kernel(dom, 0.0, CONFIG_B)
    tr = march(box_of_mass(dom, 2.0), StepConfig(t0=1e-3, t1=0.5, steps=40), table, 1.0)
    assert all(d["final_residual"] <= 1e-10 for d in tr.diagnostics)
    assert np.all(tr.snapshots[-1].values >= 0)


def test_nonconvergence_reports_step():
    dom = build_domain(FULL_LINE, 1, 4.0, 32)
    table = assemble_kernel(dom, 0.0, CONFIG_A)
    cfg = StepConfig(t0=1e-3, t1=1.0, steps=5, max_newton=1)
    with pytest.raises(NonConvergence) as err:
        march(box_of_mass(dom, 2.0), cfg, table, 1.0)
    assert err.value.step == 1
    assert err.value.residual > 0


def test_march_rejects_mismatch():
    dom = build_domain(FULL_LINE, 1, 4.0, 32)
    table = assemble_kernel(build_domain(FULL_LINE, 1, 4.0, 16), 0.0, CONFIG_A)
    with pytest.raises(DomainMismatch):
        march(dom.zeros(), CFG, table, 1.0)


@pytest.mark.parametrize("kw", [dict(steps=0), dict(newton_tol=0.0), dict(ls_shrink=1.0), dict(t0=2.0, t1=1.0),
                                dict(schedule="uniform"), dict(schedule="cosine")])
def test_step_config_validation(kw):
    with pytest.raises(ConfigError):
        StepConfig(**kw)


def test_time_grids():
    g = StepConfig(t0=1e-3, t1=10.0, steps=200).times()
    assert g[0] == 0.0 and g[1] == pytest.approx(1e-3) and g[-1] == pytest.approx(10.0)
    assert len(g) == 201
    ratios = g[2:] / g[1:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    u = StepConfig(schedule="uniform", t0=0.0, dt=0.1, steps=10).times()
    np.testing.assert_allclose(u, np.arange(11) * 0.1)


def test_tie_labels():
    v = np.array([1.0, 1.0 + 1e-15, 0.5, 1.0 - 2e-16, 0.0])
    lab = tie_labels(v, 2.0 ** 12)
    assert lab[0] == lab[1] == lab[3]
    assert len(set(lab.tolist())) == 3
