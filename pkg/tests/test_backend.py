import importlib

import numpy as np
import pytest

from dnlap import _backend, _kernels_py
from dnlap.exponents import ModelParams
from dnlap.grid import FULL_LINE, RADIAL, build_domain
from dnlap.kernel import assemble_kernel

cy = pytest.importorskip("dnlap._kernels_cy")


@pytest.fixture(params=[(FULL_LINE, 1, 3.0), (RADIAL, 2, 1.45), (RADIAL, 1, 2.0)])
def case(request, rng):
    mode, d, p = request.param
    dom = build_domain(mode, d, 5.0, 40)
    t = assemble_kernel(dom, 0.0, ModelParams(d, 0.5, p, 1.0))
    return t, rng.normal(size=40), rng.normal(size=40)


@pytest.mark.parametrize("threads", [1, 2])
def test_backends_agree(case, threads):
    t, a, b = case
    K, E, w, p = t.K, t.E, t.domain.weights, t.p
    np.testing.assert_allclose(cy.pv_apply(K, E, a, p, threads), _kernels_py.pv_apply(K, E, a, p, threads),
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cy.pv_jacobian(K, E, a, p, 1e-12, threads),
                               _kernels_py.pv_jacobian(K, E, a, p, 1e-12, threads), rtol=1e-12, atol=1e-14)
    assert cy.pair_energy(K, E, w, a, p, threads) == pytest.approx(
        _kernels_py.pair_energy(K, E, w, a, p, threads), rel=1e-12)
    assert cy.pair_pairing(K, E, w, a, b, p, threads) == pytest.approx(
        _kernels_py.pair_pairing(K, E, w, a, b, p, threads), rel=1e-12)
    above = (a > b).astype(np.uint8)
    assert cy.crossing_dissipation(K, E, w, a, b, above, p, threads) == pytest.approx(
        _kernels_py.crossing_dissipation(K, E, w, a, b, above, p, threads), rel=1e-12)


def test_forced_python_backend(monkeypatch):
    monkeypatch.setenv("DNLAP_BACKEND", "python")
    mod = importlib.reload(_backend)
    try:
        assert mod.BACKEND == "python"
        assert mod.kernels is _kernels_py
    finally:
        monkeypatch.delenv("DNLAP_BACKEND")
        importlib.reload(_backend)


def test_threads_setting():
    old = _backend.threads()
    _backend.set_threads(3)
    assert _backend.threads() == 3
    _backend.set_threads(0)
    assert _backend.threads() >= 1
    _backend.set_threads(old)
