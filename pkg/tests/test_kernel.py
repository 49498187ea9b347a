import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dnlap.errors import ConfigError, SingularError
from dnlap.exponents import ModelParams
from dnlap.grid import FULL_LINE, RADIAL, build_domain
from dnlap.kernel import (EXCLUDE_SELF_CELL, QUADRATIC_ANNULUS, TRIM_NEIGHBOURS, angular_kernel,
                          angular_kernel_matrix, assemble_kernel, cached_kernel, exterior_weight,
                          kernel_values, load_table, save_table)
from dnlap.nonlocal_op import pv_values

from conftest import CONFIG_A

P2 = ModelParams(1, 0.5, 2.0, 1.0)


def test_angular_kernel_one_dimensional():
    assert angular_kernel(1.0, 2.0, CONFIG_A) == pytest.approx(1.0 + 3.0 ** -2.5, rel=1e-15)
    assert angular_kernel(1.0, 2.0, CONFIG_A) == pytest.approx(1.0641500299099584, rel=1e-12)
    assert angular_kernel(0.0, 1.0, CONFIG_A) == pytest.approx(2.0)


def test_angular_kernel_coincident():
    with pytest.raises(SingularError):
        angular_kernel(1.0, 1.0, CONFIG_A)


def test_angular_kernel_ring_oracle():
    # d = 2, sp = 1: Cartesian sum of |x - y|^{-3} against a narrow Gaussian
    # ring at radius 2, compared with the radial integral of the reduced kernel
    params = ModelParams(2, 0.5, 2.0, 1.0)
    sig, h = 0.03, 0.004
    g = np.arange(-2.4, 2.4 + h / 2, h)
    X, Y = np.meshgrid(g, g, indexing="ij")
    ring = lambda r: np.exp(-0.5 * ((r - 2.0) / sig) ** 2) / (sig * math.sqrt(2 * math.pi))
    brute = np.sum(ring(np.hypot(X, Y)) * np.hypot(X - 1.0, Y) ** -3) * h * h
    reduced = integrate.quad(lambda r: ring(r) * angular_kernel(1.0, r, params),
                             2 - 10 * sig, 2 + 10 * sig, epsrel=1e-12, epsabs=0)[0]
    assert brute == pytest.approx(reduced, rel=1e-4)
    assert angular_kernel(1.0, 2.0, params) == pytest.approx(2.969976271234501, rel=1e-8)


@pytest.mark.parametrize("d, sp", [(2, 1.0), (3, 1.5), (2, 0.4)])
def test_closed_form_matches_quadrature(d, sp):
    params = ModelParams(d, sp / 2.0, 2.0, 1.0)
    for r, rho in [(0.3, 1.0), (1.0, 1.05), (2.0, 0.5)]:
        assert float(angular_kernel_matrix(r, rho, d, sp)) == pytest.approx(
            angular_kernel(r, rho, params), rel=1e-7)


def test_two_node_kernel():
    dom = build_domain(FULL_LINE, 1, 1.0, 2, min_nodes=2)
    t = assemble_kernel(dom, 0.0, CONFIG_A)
    np.testing.assert_allclose(dom.nodes, [-0.5, 0.5])
    assert t.K[0, 1] == t.K[1, 0] == 1.0
    assert t.diagonal_rule == EXCLUDE_SELF_CELL


@pytest.mark.parametrize("mode, d", [(FULL_LINE, 1), (RADIAL, 1), (RADIAL, 2), (RADIAL, 3)])
def test_kernel_table_finite_nonnegative(mode, d):
    params = ModelParams(d, 0.5, 3.0, 1.0)
    t = assemble_kernel(build_domain(mode, d, 5.0, 48), 0.0, params)
    assert np.all(np.isfinite(t.K)) and np.all(t.K >= 0)
    assert np.all(np.isfinite(t.E)) and np.all(t.E > 0)
    assert np.all(np.isfinite(t.K.sum(axis=1)))
    assert np.all(np.diag(t.K) == 0)
    if mode == FULL_LINE:
        np.testing.assert_array_equal(t.K, t.K.T)


def test_epsilon_rules():
    dom = build_domain(FULL_LINE, 1, 4.0, 64)
    h = dom.h
    assert assemble_kernel(dom, h / 2, P2).diagonal_rule == EXCLUDE_SELF_CELL
    assert assemble_kernel(dom, h / 4, P2).diagonal_rule == QUADRATIC_ANNULUS
    assert assemble_kernel(dom, 0.75 * h, P2).diagonal_rule == TRIM_NEIGHBOURS
    with pytest.raises(ConfigError):
        assemble_kernel(dom, h, P2)
    with pytest.raises(ConfigError):
        assemble_kernel(dom, h / 4, CONFIG_A)


def test_pv_converges_under_refinement():
    f = lambda x: np.exp(-x ** 2)
    vals = []
    for n in (64, 128, 256, 512):
        dom = build_domain(FULL_LINE, 1, 8.0, n)
        pv = pv_values(f(dom.nodes), assemble_kernel(dom, 0.0, P2))
        vals.append(np.interp(0.5, dom.nodes, pv))
    e = np.abs(np.diff(vals))
    orders = np.log2(e[:-1] / e[1:])
    assert np.all(orders >= 1.0)


def test_epsilon_halving_monotone():
    dom = build_domain(FULL_LINE, 1, 8.0, 128)
    h = dom.h
    v = np.exp(-dom.nodes ** 2)
    pv = [pv_values(v, assemble_kernel(dom, eps, P2)) for eps in (h / 2, h / 4, h / 8)]
    inner = np.abs(dom.nodes) < 4
    d1 = np.abs(pv[0] - pv[1])[inner]
    d2 = np.abs(pv[1] - pv[2])[inner]
    assert np.all(d2 < d1)


@given(st.floats(0.1, 10.0))
def test_dilation_scaling(k):
    dom = build_domain(FULL_LINE, 1, 3.0, 16)
    big = build_domain(FULL_LINE, 1, 3.0 * k, 16)
    np.testing.assert_allclose(kernel_values(big, CONFIG_A),
                               k ** -(1 + CONFIG_A.sp) * kernel_values(dom, CONFIG_A), rtol=1e-13)


def test_exterior_weight_one_dimensional():
    x, R = 0.3, 2.0
    expect = integrate.quad(lambda y: abs(x - y) ** -2.5, R, np.inf)[0] + \
        integrate.quad(lambda y: abs(x - y) ** -2.5, -np.inf, -R)[0]
    assert exterior_weight(x, R, CONFIG_A) == pytest.approx(expect, rel=1e-10)


def test_exterior_weight_radial_origin():
    params = ModelParams(2, 0.5, 3.0, 1.0)
    # ∫_{|y|>R} |y|^{-d-sp} = ω_d R^{-sp} / sp
    assert exterior_weight(0.0, 2.0, params) == pytest.approx(2 * math.pi * 2.0 ** -1.5 / 1.5)
    assert exterior_weight(1e-6, 2.0, params) == pytest.approx(2 * math.pi * 2.0 ** -1.5 / 1.5, rel=1e-6)


def test_cache_roundtrip(tmp_path):
    dom = build_domain(RADIAL, 2, 3.0, 20)
    params = ModelParams(2, 0.5, 3.0, 1.0)
    t = assemble_kernel(dom, 0.0, params)
    save_table(t, tmp_path / "k.bin")
    raw = (tmp_path / "k.bin").read_bytes()
    assert raw[:4] == b"DNLK"
    back = load_table(tmp_path / "k.bin", dom, params, 0.0)
    np.testing.assert_array_equal(back.K, t.K)
    np.testing.assert_array_equal(back.E, t.E)
    assert load_table(tmp_path / "k.bin", build_domain(RADIAL, 2, 3.0, 24), params, 0.0) is None
    c1 = cached_kernel(dom, 0.0, params, tmp_path / "cache")
    c2 = cached_kernel(dom, 0.0, params, tmp_path / "cache")
    np.testing.assert_array_equal(c1.K, c2.K)
    assert len(list((tmp_path / "cache").iterdir())) == 1
