import numpy as np
import pytest

from ncmogp.dataset import Dataset
from ncmogp.errors import NumericalError
from ncmogp.kernels import EQConvolution, KernelParams, cross_cov, latent_cov
from ncmogp.model import (
    ModelSpec,
    assemble,
    cov_homogeneous,
    cov_separable,
    dgp_cross_cov,
    icm_cross_cov,
    mean_homogeneous,
    mean_separable,
    second_moment_homogeneous,
    sub_index,
)

N_MC = 1_000_000


def params_for(rng, n_kernels, p=1, scale=1.0):
    return KernelParams.create(
        rng.uniform(0.3, 1.0, n_kernels) * scale * rng.choice([-1, 1], n_kernels),
        np.exp(rng.uniform(-2.5, -1.0, (n_kernels, p))),
        np.exp(rng.uniform(-2.0, -0.5, p)),
        np.exp(rng.uniform(-6, -3, n_kernels)),
    )


def normalised(P, target=0.6):
    """Rescale sensitivities so every output has marginal variance ``target``."""
    v = np.array([cross_cov(d, d, 0.0, 0.0, P) for d in range(P.n_kernels)])
    return KernelParams.create(
        P.sensitivity * np.sqrt(target / v), P.lengthscale, P.latent_lengthscale, P.noise_var
    )


def poly(f, C):
    return sum(f**c for c in range(1, C + 1))


def assert_within_3se(samples, value):
    se = samples.std() / np.sqrt(samples.size)
    assert abs(samples.mean() - value) <= 3 * se + 1e-12 * abs(value)


def test_spec_validation():
    assert ModelSpec(order=4, variant="icm").order == 1
    assert ModelSpec(order=3, variant="separable", n_outputs=2).n_kernels == 12
    with pytest.raises(ValueError):
        ModelSpec(order=0)
    with pytest.raises(ValueError):
        ModelSpec(variant="nonsense")
    assert [sub_index(c, i) for c in (1, 2, 3) for i in range(1, c + 1)] == list(range(6))


def test_mean_examples():
    P = normalised(params_for(np.random.default_rng(0), 1))
    k = cross_cov(0, 0, 0.3, 0.3, P)
    assert mean_homogeneous(0, 0.3, 1, P) == 0.0
    assert mean_homogeneous(0, 0.3, 2, P) == pytest.approx(k, rel=1e-14)
    assert mean_homogeneous(0, 0.3, 4, P) == pytest.approx(k + 3 * k**2, rel=1e-14)


def test_second_moment_cubic_terms():
    P = normalised(params_for(np.random.default_rng(1), 2))
    k11 = cross_cov(0, 0, 0.2, 0.2, P)
    k12 = cross_cov(0, 1, 0.2, 0.5, P)
    k22 = cross_cov(1, 1, 0.5, 0.5, P)
    only33 = second_moment_homogeneous(0, 1, 0.2, 0.5, 3, P) - second_moment_homogeneous(
        0, 1, 0.2, 0.5, 2, P
    )
    # order 3 adds the (1,3), (3,1) and (3,3) pairs
    pair13 = 3 * k11 * k12
    pair31 = 3 * k22 * k12
    pair33 = 6 * k12**3 + 9 * k11 * k12 * k22
    assert only33 == pytest.approx(pair13 + pair31 + pair33, rel=1e-12)


@pytest.mark.parametrize("C", [1, 2, 3, 4])
def test_homogeneous_monte_carlo(C):
    rng = np.random.default_rng(10 + C)
    P = normalised(params_for(rng, 2))
    t, t2 = 0.3, 0.42
    Phi = np.array(
        [
            [cross_cov(0, 0, t, t, P), cross_cov(0, 1, t, t2, P)],
            [cross_cov(1, 0, t2, t, P), cross_cov(1, 1, t2, t2, P)],
        ]
    )
    F = rng.multivariate_normal(np.zeros(2), Phi, size=N_MC)
    g1, g2 = poly(F[:, 0], C), poly(F[:, 1], C)
    assert_within_3se(g1, mean_homogeneous(0, t, C, P))
    assert_within_3se(g2, mean_homogeneous(1, t2, C, P))
    prod = (g1 - g1.mean()) * (g2 - g2.mean())
    assert_within_3se(prod, cov_homogeneous(0, 1, t, t2, C, P))


def test_separable_monte_carlo():
    rng = np.random.default_rng(20)
    C, D = 2, 2
    P = normalised(params_for(rng, D * 3))
    t, t2 = 0.25, 0.4
    items = [(v, t) for v in range(3)] + [(3 + v, t2) for v in range(3)]
    Phi = np.array([[cross_cov(a, b, ta, tb, P) for b, tb in items] for a, ta in items])
    F = rng.multivariate_normal(np.zeros(6), Phi, size=N_MC)
    # sub-kernel order: (1,1), (2,1), (2,2)
    g1 = F[:, 0] + F[:, 1] * F[:, 2]
    g2 = F[:, 3] + F[:, 4] * F[:, 5]
    assert_within_3se(g1, mean_separable(0, t, C, P))
    prod = (g1 - g1.mean()) * (g2 - g2.mean())
    assert_within_3se(prod, cov_separable(0, 1, t, t2, C, P))


def test_separable_quartic_mean_term():
    rng = np.random.default_rng(21)
    P = normalised(params_for(rng, 10))
    t = 0.37
    # the c = 4 items of output 0 are sub-kernels 6..9
    k = lambda i, j: cross_cov(6 + i, 6 + j, t, t, P)  # noqa: E731
    term4 = k(0, 1) * k(2, 3) + k(0, 2) * k(1, 3) + k(0, 3) * k(1, 2)
    term2 = cross_cov(1, 2, t, t, P)
    assert mean_separable(0, t, 4, P) == pytest.approx(term2 + term4, rel=1e-13)


def tied(P, C):
    """Separable params whose sub-kernels all copy the homogeneous kernel."""
    n_sub = C * (C + 1) // 2
    rep = lambda a: np.repeat(a, n_sub, axis=0)  # noqa: E731
    return KernelParams.create(
        rep(P.sensitivity), rep(P.lengthscale), P.latent_lengthscale, P.noise_var
    )


@pytest.mark.parametrize("C", [1, 2, 3, 4])
def test_tied_separable_equals_homogeneous(C):
    rng = np.random.default_rng(30 + C)
    P = normalised(params_for(rng, 2))
    Q = tied(P, C)
    for t, t2 in [(0.1, 0.1), (0.2, 0.6)]:
        assert mean_separable(1, t, C, Q) == pytest.approx(mean_homogeneous(1, t, C, P), rel=1e-12)
        assert cov_separable(0, 1, t, t2, C, Q) == pytest.approx(
            cov_homogeneous(0, 1, t, t2, C, P), rel=1e-12
        )
    ds = small_dataset(rng, D=2, n=4)
    mu_h, K_h = assemble(ds, ModelSpec(C, "homogeneous", 2, 1), P)
    mu_s, K_s = assemble(ds, ModelSpec(C, "separable", 2, 1), Q)
    np.testing.assert_allclose(mu_s, mu_h, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(K_s, K_h, rtol=1e-12, atol=1e-14 * np.abs(K_h).max())


def test_scalar_symmetry():
    rng = np.random.default_rng(40)
    P = normalised(params_for(rng, 2))
    assert cov_homogeneous(0, 1, 0.1, 0.7, 3, P) == pytest.approx(
        cov_homogeneous(1, 0, 0.7, 0.1, 3, P), rel=1e-14
    )
    Q = params_for(rng, 6)
    assert cov_separable(0, 1, 0.1, 0.7, 2, Q) == pytest.approx(
        cov_separable(1, 0, 0.7, 0.1, 2, Q), rel=1e-13
    )


def small_dataset(rng, D=2, n=4, p=1, sizes=None):
    sizes = sizes or [n] * D
    return Dataset(
        [rng.uniform(0, 1, (m, p)) for m in sizes],
        [rng.standard_normal(m) for m in sizes],
    )


def test_c1_is_convolution_gram():
    rng = np.random.default_rng(50)
    P = params_for(rng, 3, p=2)
    ds = small_dataset(rng, D=3, n=5, p=2)
    mu, K = assemble(ds, ModelSpec(1, "homogeneous", 3, 2), P)
    assert np.all(mu == 0.0)
    G = EQConvolution("conv").gram(ds.X, ds.outputs, ds.X, ds.outputs, P)
    np.testing.assert_allclose(K, G, rtol=1e-12, atol=0)
    for a in range(len(ds)):
        for b in range(len(ds)):
            ref = cross_cov(ds.outputs[a], ds.outputs[b], ds.X[a], ds.X[b], P)
            assert K[a, b] == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("variant", ["homogeneous", "separable"])
def test_assemble_entrywise(variant):
    rng = np.random.default_rng(51)
    C, D = 3, 2
    spec = ModelSpec(C, variant, D, 1)
    P = normalised(params_for(rng, spec.n_kernels))
    ds = small_dataset(rng, D=D, sizes=[4, 3])
    mu, K = assemble(ds, spec, P)
    mean_fn = mean_homogeneous if variant == "homogeneous" else mean_separable
    cov_fn = cov_homogeneous if variant == "homogeneous" else cov_separable
    X, o = ds.X[:, 0], ds.outputs
    for a in range(len(ds)):
        assert mu[a] == pytest.approx(mean_fn(o[a], X[a], C, P), rel=1e-12)
        for b in range(len(ds)):
            assert K[a, b] == pytest.approx(cov_fn(o[a], o[b], X[a], X[b], C, P), rel=1e-11)
    assert np.array_equal(K, K.T)


def test_permutation_conjugates():
    rng = np.random.default_rng(52)
    spec = ModelSpec(3, "homogeneous", 3, 1)
    P = normalised(params_for(rng, 3))
    ds = small_dataset(rng, D=3, sizes=[3, 4, 2])
    mu, K = assemble(ds, spec, P)
    order = [2, 0, 1]
    Pp = KernelParams(
        P.sensitivity[order], P.log_lengthscale[order], P.log_latent_lengthscale, P.log_noise_var[order]
    )
    mu2, K2 = assemble(ds.permuted(order), spec, Pp)
    starts = np.cumsum([0] + ds.sizes)
    idx = np.concatenate([np.arange(starts[d], starts[d + 1]) for d in order])
    np.testing.assert_allclose(mu2, mu[idx], rtol=1e-14)
    np.testing.assert_allclose(K2, K[np.ix_(idx, idx)], rtol=1e-14)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_diagnostics():
    rng = np.random.default_rng(53)
    P = params_for(rng, 2)
    P = KernelParams.create([1e200, 1.0], P.lengthscale, P.latent_lengthscale)
    ds = small_dataset(rng, D=2, n=3)
    with pytest.raises(NumericalError) as info:
        assemble(ds, ModelSpec(2, "homogeneous", 2, 1), P)
    diag = info.value.diagnostics
    assert diag["d"] == 0
    assert {"d", "d2", "n", "m"} <= set(diag)


def test_icm_reduction():
    rng = np.random.default_rng(54)
    P = KernelParams.create([1.0, 1.0], [[1.0], [1.0]], [0.3])
    assert icm_cross_cov(0, 1, 0.2, 0.5, P) == pytest.approx(latent_cov(0.2, 0.5, P), rel=1e-15)
    a = np.array([0.5, -2.0, 1.5])
    Q = KernelParams.create(a, np.ones((3, 1)), [0.3])
    B = np.array([[icm_cross_cov(i, j, 0.1, 0.1, Q) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(B, np.outer(a, a), rtol=1e-15)
    w = np.linalg.eigvalsh(B)
    assert w.min() >= -1e-12 * w.max()
    assert np.sum(w > 1e-10 * w.max()) == 1
    ds = small_dataset(rng, D=3, n=4)
    _, K = assemble(ds, ModelSpec(5, "icm", 3, 1), Q)
    ref = np.array(
        [[icm_cross_cov(p, q, x, y, Q) for q, y in zip(ds.outputs, ds.X[:, 0])] for p, x in zip(ds.outputs, ds.X[:, 0])]
    )
    np.testing.assert_allclose(K, ref, rtol=1e-13)


def test_dgp_reduction():
    rng = np.random.default_rng(55)
    P = params_for(rng, 2)
    assert dgp_cross_cov(0, 1, 0.2, 0.6, P) == pytest.approx(dgp_cross_cov(1, 0, 0.6, 0.2, P))
    ds = small_dataset(rng, D=2, n=4)
    mu, K = assemble(ds, ModelSpec(1, "dgp", 2, 1), P)
    assert np.all(mu == 0)
    ref = np.array(
        [[dgp_cross_cov(p, q, x, y, P) for q, y in zip(ds.outputs, ds.X[:, 0])] for p, x in zip(ds.outputs, ds.X[:, 0])]
    )
    np.testing.assert_allclose(K, ref, rtol=1e-13)


@pytest.mark.parametrize("C", [1, 2, 3, 4, 5])
def test_psd(C):
    rng = np.random.default_rng(60 + C)
    for variant in ("homogeneous", "separable"):
        spec = ModelSpec(C, variant, 2, 1)
        P = normalised(params_for(rng, spec.n_kernels))
        ds = small_dataset(rng, D=2, n=12)
        _, K = assemble(ds, spec, P)
        w = np.linalg.eigvalsh(K)
        assert w.min() >= -1e-8 * w.max()
