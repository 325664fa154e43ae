import numpy as np
import pytest

from ncmogp import _backend, _fallback
from ncmogp.inference import log_marginal_and_grad
from ncmogp.kernels import KernelParams
from ncmogp.dataset import Dataset
from ncmogp.model import ModelSpec

compiled = pytest.mark.skipif("cython" not in _backend.available(), reason="extension not built")


def inputs(rng, n=40, m=30, p=2, K=3):
    X1 = rng.uniform(0, 1, (n, p))
    X2 = rng.uniform(0, 1, (m, p))
    o1 = rng.integers(0, K, n).astype(np.intp)
    o2 = rng.integers(0, K, m).astype(np.intp)
    amp = rng.uniform(0.5, 2, (K, K))
    inv2v = rng.uniform(1, 20, (K, K, p))
    return X1, o1, X2, o2, amp, inv2v


@compiled
def test_kernels_agree():
    from ncmogp import _core

    rng = np.random.default_rng(0)
    X1, o1, X2, o2, amp, inv2v = inputs(rng)
    np.testing.assert_allclose(
        _core.eq_gram(X1, o1, X2, o2, amp, inv2v),
        _fallback.eq_gram(X1, o1, X2, o2, amp, inv2v),
        rtol=1e-13,
    )
    G = rng.standard_normal((X1.shape[0], X2.shape[0]))
    for a, b in zip(
        _core.eq_moments(G, X1, o1, X2, o2, amp, inv2v),
        _fallback.eq_moments(G, X1, o1, X2, o2, amp, inv2v),
    ):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)
    kappa = rng.uniform(-1, 1, (40, 30))
    U, V = rng.standard_normal((4, 40)), rng.standard_normal((4, 30))
    dU, dV = rng.standard_normal((4, 40)), rng.standard_normal((4, 30))
    np.testing.assert_allclose(
        _core.volterra_cov(kappa, U, V), _fallback.volterra_cov(kappa, U, V), rtol=1e-12, atol=1e-14
    )
    for a, b in zip(
        _core.volterra_adjoint(G, kappa, U, V, dU, dV),
        _fallback.volterra_adjoint(G, kappa, U, V, dU, dV),
    ):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


@compiled
@pytest.mark.parametrize("variant", ["homogeneous", "separable"])
def test_likelihood_agrees(variant):
    rng = np.random.default_rng(1)
    spec = ModelSpec(3, variant, 2, 1)
    K = spec.n_kernels
    P = KernelParams.create(
        rng.uniform(0.3, 0.8, K), np.exp(rng.uniform(-2.5, -1, (K, 1))), [0.2], [0.01, 0.02]
    )
    ds = Dataset([rng.uniform(0, 1, (7, 1)), rng.uniform(0, 1, (6, 1))], [rng.standard_normal(7), rng.standard_normal(6)])
    old = _backend.use("cython")
    try:
        v1, g1 = log_marginal_and_grad(ds, spec, P)
        _backend.use("python")
        v2, g2 = log_marginal_and_grad(ds, spec, P)
    finally:
        _backend.use(old)
    assert v1 == pytest.approx(v2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-9, atol=1e-12)


def test_use_rejects_unknown():
    with pytest.raises(ValueError):
        _backend.use("fortran")
    assert "python" in _backend.available()
