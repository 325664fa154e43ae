"""Mean and covariance of the moment-matched Volterra output process.

Each output is a truncated Volterra series of order ``C`` driven by one latent
GP ``u``. With separable kernels the ``c``-th term is a product of ``c``
linear functionals ``f^(c,i)_d`` of ``u``, so its moments are Gaussian product
moments of jointly Gaussian variables whose covariances come from
:mod:`ncmogp.kernels`. The non-Gaussian output is replaced by the GP with the
same first two moments.

Two implementations live here:

* scalar functions (``mean_homogeneous``, ``cov_separable``, ...) that follow
  the moment formulas term by term through :mod:`ncmogp.moments`;
* vectorised engines (:class:`HomogeneousVolterra`,
  :class:`SeparableVolterra`) used for matrix assembly and gradients.

For the homogeneous model the pair coefficient splits as
``A = [c!/(2**l11 l11!)] [c'!/(2**l22 l22!)] / l12!``, so with
``P_j(a) = sum_l (2l+j)!/(2**l l!) a**l`` the covariance is

    K_nm = sum_{j=1..C} kappa_nm**j P_j(a_n) P_j(b_m) / j!,

a sum of Hadamard powers of the base Gram matrix (hence PSD). The ``j = 0``
terms are exactly the product of means and are dropped rather than subtracted.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import exp, lgamma, log

import numpy as np

from . import _backend
from .dataset import Dataset
from .errors import NumericalError
from .kernels import EQConvolution, KernelParams, cross_cov
from .moments import (
    enumerate_moment_matrices,
    pair_moment_coefficient,
    pairings,
    product_moment,
    product_moment_unit,
)

VARIANTS = ("homogeneous", "separable", "icm", "dgp")


@dataclass
class ModelSpec:
    """Volterra order, variant and problem shape.

    ``icm`` and ``dgp`` are first-order models and force ``order = 1``.
    """

    order: int = 1
    variant: str = "homogeneous"
    n_outputs: int = 1
    input_dim: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.order = int(self.order)
        if self.order < 1:
            raise ValueError("Volterra order must be >= 1")
        if self.variant in ("icm", "dgp"):
            self.order = 1
        if self.n_outputs < 1 or self.input_dim < 1:
            raise ValueError("need at least one output and one input dimension")

    @property
    def n_sub(self) -> int:
        """Smoothing kernels per output."""
        if self.variant == "separable":
            return self.order * (self.order + 1) // 2
        return 1

    @property
    def n_kernels(self) -> int:
        return self.n_outputs * self.n_sub

    @property
    def kernel_mode(self) -> str:
        return {"icm": "icm", "dgp": "white"}.get(self.variant, "conv")

    def engine(self):
        if self.variant == "separable":
            return SeparableVolterra(self.order, self.n_outputs)
        return HomogeneousVolterra(self.order, self.kernel_mode)


def sub_index(c: int, i: int) -> int:
    """Index of the first-degree kernel ``(c, i)``, ``1 <= i <= c``."""
    if not 1 <= i <= c:
        raise ValueError(f"invalid sub-kernel ({c}, {i})")
    return c * (c - 1) // 2 + i - 1


# ---------------------------------------------------------------------------
# scalar forms


def mean_homogeneous(d: int, t, C: int, params: KernelParams) -> float:
    """``E[sum_c f_d(t)**c]``; only even ``c`` contribute."""
    kdd = cross_cov(d, d, t, t, params)
    return sum(product_moment([c], [[kdd]]) for c in range(2, C + 1, 2))


def second_moment_homogeneous(d: int, d2: int, t, t2, C: int, params: KernelParams) -> float:
    """``E[f^(C)_d(t) f^(C)_d2(t2)]`` summed over ``(c, c')`` and the 2x2 ``T_a``."""
    k11 = cross_cov(d, d, t, t, params)
    k12 = cross_cov(d, d2, t, t2, params)
    k22 = cross_cov(d2, d2, t2, t2, params)
    total = 0.0
    for c in range(1, C + 1):
        for c2 in range(1, C + 1):
            if (c + c2) % 2:
                continue
            for L in enumerate_moment_matrices((c, c2)):
                l11, l12, l22 = L.upper
                total += (
                    exp(pair_moment_coefficient(c, c2, L))
                    * k11**l11
                    * k12**l12
                    * k22**l22
                )
    return total


def cov_homogeneous(d: int, d2: int, t, t2, C: int, params: KernelParams) -> float:
    return second_moment_homogeneous(d, d2, t, t2, C, params) - mean_homogeneous(
        d, t, C, params
    ) * mean_homogeneous(d2, t2, C, params)


def _n_outputs_separable(C, params):
    n_sub = C * (C + 1) // 2
    if params.n_kernels % n_sub:
        raise ValueError(
            f"separable order {C} needs {n_sub} sub-kernels per output; "
            f"params hold {params.n_kernels}"
        )
    return n_sub


def _sub_items(d, c, n_sub):
    return [d * n_sub + sub_index(c, i) for i in range(1, c + 1)]


def mean_separable(d: int, t, C: int, params: KernelParams) -> float:
    """``sum_c E[prod_i f^(c,i)_d(t)]`` via pairings of the ``c x c`` table."""
    n_sub = _n_outputs_separable(C, params)
    if not 0 <= d < params.n_kernels // n_sub:
        raise IndexError(f"output index {d} out of range")
    total = 0.0
    for c in range(2, C + 1, 2):
        items = _sub_items(d, c, n_sub)
        phi = [[cross_cov(a, b, t, t, params) for b in items] for a in items]
        total += product_moment_unit(c, phi)
    return total


def second_moment_separable(d: int, d2: int, t, t2, C: int, params: KernelParams) -> float:
    n_sub = _n_outputs_separable(C, params)
    total = 0.0
    for c in range(1, C + 1):
        for c2 in range(1, C + 1):
            if (c + c2) % 2:
                continue
            items = [(v, t) for v in _sub_items(d, c, n_sub)]
            items += [(v, t2) for v in _sub_items(d2, c2, n_sub)]
            phi = [[cross_cov(a, b, ta, tb, params) for b, tb in items] for a, ta in items]
            total += product_moment_unit(c + c2, phi)
    return total


def cov_separable(d: int, d2: int, t, t2, C: int, params: KernelParams) -> float:
    return second_moment_separable(d, d2, t, t2, C, params) - mean_separable(
        d, t, C, params
    ) * mean_separable(d2, t2, C, params)


def icm_cross_cov(d: int, d2: int, t, t2, params: KernelParams) -> float:
    """Rank-one coregionalisation ``a_d a_d2 k_u(t, t2)``; ``a`` is ``params.sensitivity``."""
    return float(_ICM.paired(np.atleast_1d(t)[None], [d], np.atleast_1d(t2)[None], [d2], params)[0])


def dgp_cross_cov(d: int, d2: int, t, t2, params: KernelParams) -> float:
    """``int G_d(t - s) G_d2(t2 - s) ds``: convolution of white noise."""
    return float(
        _WHITE.paired(np.atleast_1d(t)[None], [d], np.atleast_1d(t2)[None], [d2], params)[0]
    )


_ICM = EQConvolution("icm")
_WHITE = EQConvolution("white")


# ---------------------------------------------------------------------------
# vectorised engines


@lru_cache(maxsize=None)
def volterra_coefficients(C: int) -> np.ndarray:
    """``coef[j, l] = (2l+j)! / (2**l l!)`` for ``2l + j <= C`` (else 0)."""
    coef = np.zeros((C + 1, C // 2 + 1))
    for j in range(C + 1):
        for l in range((C - j) // 2 + 1):
            coef[j, l] = exp(lgamma(2 * l + j + 1) - l * log(2.0) - lgamma(l + 1))
    coef.setflags(write=False)
    return coef


def _poly(coef, a):
    """Evaluate ``sum_l coef[:, l] a**l`` and its derivative, shape ``(J, n)``."""
    a = np.asarray(a, dtype=float)
    powers = a[None, :] ** np.arange(coef.shape[1])[:, None]
    val = coef @ powers
    dcoef = coef[:, 1:] * np.arange(1, coef.shape[1])
    der = dcoef @ powers[:-1] if dcoef.shape[1] else np.zeros_like(val)
    return val, der


def _check_finite(K, o1, o2, what="covariance"):
    if np.all(np.isfinite(K)):
        return
    bad = np.argwhere(~np.isfinite(K))[0]
    n, m = (int(bad[0]), int(bad[1])) if bad.size > 1 else (int(bad[0]), int(bad[0]))
    d, d2 = int(o1[n]), int(o2[m])
    n_local = int(n - np.searchsorted(o1, d)) if np.all(np.diff(o1) >= 0) else n
    m_local = int(m - np.searchsorted(o2, d2)) if np.all(np.diff(o2) >= 0) else m
    raise NumericalError(
        f"non-finite {what} entry for outputs (d={d}, d'={d2}) at points "
        f"(n={n_local}, m={m_local})",
        {"d": d, "d2": d2, "n": n_local, "m": m_local},
    )


class HomogeneousVolterra:
    """All first-degree kernels of an output are the same ``G_d``.

    With ``mode="icm"`` or ``"white"`` and ``order=1`` this is the ICM or
    dependent-GP baseline.
    """

    def __init__(self, order: int, mode: str = "conv"):
        self.order = order
        self.base = EQConvolution(mode)
        coef = volterra_coefficients(order)
        self._mean_coef = coef[0].copy()
        self._mean_coef[0] = 0.0
        self._coef = coef[1:]
        self._inv_fact = np.exp(-np.array([lgamma(j + 1) for j in range(1, order + 1)]))

    def _row_coeffs(self, a):
        P, dP = _poly(self._coef, a)
        s = self._inv_fact[:, None]
        return np.ascontiguousarray(P * s), np.ascontiguousarray(P), dP * s, dP

    def mean(self, X, o, params):
        a = self.base.self_cov(o, params)
        return np.polyval(self._mean_coef[::-1], a)

    def cov(self, X1, o1, X2, o2, params):
        kappa = self.base.gram(X1, o1, X2, o2, params)
        if self.order == 1:
            return kappa
        U, _, _, _ = self._row_coeffs(self.base.self_cov(o1, params))
        _, V, _, _ = self._row_coeffs(self.base.self_cov(o2, params))
        return _backend.core.volterra_cov(kappa, U, V)

    def cov_diag(self, X, o, params):
        a = self.base.self_cov(o, params)
        if self.order == 1:
            return a
        P, _ = _poly(self._coef, a)
        powers = a[None, :] ** np.arange(1, self.order + 1)[:, None]
        return np.sum(powers * P**2 * self._inv_fact[:, None], axis=0)

    def vjp(self, X, o, Wbar, mbar, params):
        """Gradient of ``sum(Wbar * K) + mbar @ mu`` over the kernel params.

        Returns a vector aligned with ``params.pack()`` (noise entries zero).
        """
        X = np.ascontiguousarray(X, dtype=float)
        a = self.base.self_cov(o, params)
        kappa = self.base.gram(X, o, X, o, params)
        Wbar = np.ascontiguousarray(Wbar, dtype=float)
        if self.order == 1:
            Gk, g_self = Wbar, np.zeros(len(o))
        else:
            U, V, dU, dV = self._row_coeffs(a)
            Gk, ga, gb = _backend.core.volterra_adjoint(
                Wbar, kappa, U, V, np.ascontiguousarray(dU), np.ascontiguousarray(dV)
            )
            dmean = np.polyval(np.polyder(self._mean_coef[::-1]), a)
            g_self = ga + gb + np.asarray(mbar, dtype=float) * dmean
        H0, H2 = self.base.moments(Gk, X, o, X, o, params)
        S0, S2 = self.base.paired_moments(g_self, X, o, X, o, params)
        gS, gell, gu = self.base.grad_from_moments(H0 + S0, H2 + S2, params)
        return np.concatenate([gS, gell.ravel(), gu, np.zeros_like(params.log_noise_var)])


@lru_cache(maxsize=None)
def _separable_terms(C: int):
    """Pairings of stacked ``(c, c')`` items with at least one cross pair.

    Each term is ``(left_within, right_within, cross)`` with sub-kernel
    indices; left items belong to the row point, right items to the column.
    """
    terms = []
    for c in range(1, C + 1):
        for c2 in range(1, C + 1):
            if (c + c2) % 2:
                continue
            left = [sub_index(c, i) for i in range(1, c + 1)]
            right = [sub_index(c2, j) for j in range(1, c2 + 1)]
            for pairing in pairings(c + c2):
                lw, rw, cr = [], [], []
                for i, j in pairing:
                    if j < c:
                        lw.append((left[i], left[j]))
                    elif i >= c:
                        rw.append((right[i - c], right[j - c]))
                    else:
                        cr.append((left[i], right[j - c]))
                if cr:
                    terms.append((tuple(lw), tuple(rw), tuple(cr)))
    return tuple(terms)


@lru_cache(maxsize=None)
def _separable_mean_terms(C: int):
    terms = []
    for c in range(2, C + 1, 2):
        items = [sub_index(c, i) for i in range(1, c + 1)]
        for pairing in pairings(c):
            terms.append(tuple((items[i], items[j]) for i, j in pairing))
    return tuple(terms)


class SeparableVolterra:
    """Independent first-degree kernels ``G^(c,i)_d`` for every ``1 <= i <= c <= C``.

    Kernel ``d * n_sub + sub_index(c, i)`` of the params is ``G^(c,i)_d``.
    """

    def __init__(self, order: int, n_outputs: int):
        self.order = order
        self.n_outputs = n_outputs
        self.n_sub = order * (order + 1) // 2
        self.base = EQConvolution("conv")
        self.terms = _separable_terms(order)
        self.mean_terms = _separable_mean_terms(order)

    def _virtual(self, X, o):
        X = np.ascontiguousarray(X, dtype=float)
        o = np.asarray(o, dtype=np.intp)
        Xv = np.repeat(X, self.n_sub, axis=0)
        ov = (o[:, None] * self.n_sub + np.arange(self.n_sub)[None, :]).ravel()
        return Xv, ov

    def _self_tables(self, o, params):
        """``T[n, s, s'] = k between sub-kernels s, s' of output o[n] at zero lag``."""
        amp_unit, *_ = self.base.tables(params)
        S = params.sensitivity
        tab = S[:, None] * S[None, :] * amp_unit
        ids = np.asarray(o, dtype=np.intp)[:, None] * self.n_sub + np.arange(self.n_sub)
        return tab[ids[:, :, None], ids[:, None, :]]

    def _cross(self, X1, o1, X2, o2, params):
        Xv1, ov1 = self._virtual(X1, o1)
        Xv2, ov2 = self._virtual(X2, o2)
        G = self.base.gram(Xv1, ov1, Xv2, ov2, params)
        return G.reshape(len(o1), self.n_sub, len(o2), self.n_sub)

    def mean(self, X, o, params):
        T = self._self_tables(o, params)
        out = np.zeros(len(o))
        for term in self.mean_terms:
            out += np.prod([T[:, s, r] for s, r in term], axis=0)
        return out

    def cov(self, X1, o1, X2, o2, params):
        B = self._cross(X1, o1, X2, o2, params)
        T1 = self._self_tables(o1, params)
        T2 = self._self_tables(o2, params)
        K = np.zeros((len(o1), len(o2)))
        for lw, rw, cr in self.terms:
            wl = np.ones(len(o1))
            for s, r in lw:
                wl = wl * T1[:, s, r]
            wr = np.ones(len(o2))
            for s, r in rw:
                wr = wr * T2[:, s, r]
            P = wl[:, None] * wr[None, :]
            for s, r in cr:
                P = P * B[:, s, :, r]
            K += P
        return K

    def cov_diag(self, X, o, params):
        X = np.ascontiguousarray(X, dtype=float)
        return np.array(
            [self.cov(X[n : n + 1], o[n : n + 1], X[n : n + 1], o[n : n + 1], params)[0, 0]
             for n in range(len(o))]
        )

    def vjp(self, X, o, Wbar, mbar, params):
        X = np.ascontiguousarray(X, dtype=float)
        o = np.asarray(o, dtype=np.intp)
        N = len(o)
        B = self._cross(X, o, X, o, params)
        T = self._self_tables(o, params)
        Wbar = np.asarray(Wbar, dtype=float)
        mbar = np.asarray(mbar, dtype=float)
        GB = np.zeros_like(B)
        GT = np.zeros_like(T)

        def prod_except(factors, k):
            out = np.ones_like(factors[0]) if factors else 1.0
            for i, f in enumerate(factors):
                if i != k:
                    out = out * f
            return out

        for lw, rw, cr in self.terms:
            lf = [T[:, s, r] for s, r in lw]
            rf = [T[:, s, r] for s, r in rw]
            cf = [B[:, s, :, r] for s, r in cr]
            wl = prod_except(lf, -1) if lf else np.ones(N)
            wr = prod_except(rf, -1) if rf else np.ones(N)
            P = prod_except(cf, -1)
            WP = Wbar * P
            for k, (s, r) in enumerate(cr):
                GB[:, s, :, r] += Wbar * (wl[:, None] * wr[None, :]) * prod_except(cf, k)
            if lf:
                row = WP @ wr
                for k, (s, r) in enumerate(lw):
                    GT[:, s, r] += row * (prod_except(lf, k) if len(lf) > 1 else 1.0)
            if rf:
                col = wl @ WP
                for k, (s, r) in enumerate(rw):
                    GT[:, s, r] += col * (prod_except(rf, k) if len(rf) > 1 else 1.0)
        for term in self.mean_terms:
            f = [T[:, s, r] for s, r in term]
            for k, (s, r) in enumerate(term):
                GT[:, s, r] += mbar * (prod_except(f, k) if len(f) > 1 else 1.0)

        Xv, ov = self._virtual(X, o)
        H0, H2 = self.base.moments(GB.reshape(N * self.n_sub, N * self.n_sub), Xv, ov, Xv, ov, params)
        ids = o[:, None] * self.n_sub + np.arange(self.n_sub)
        va = np.broadcast_to(ids[:, :, None], T.shape).ravel()
        vb = np.broadcast_to(ids[:, None, :], T.shape).ravel()
        Xp = np.repeat(X, self.n_sub * self.n_sub, axis=0)
        S0, S2 = self.base.paired_moments(GT.ravel(), Xp, va, Xp, vb, params)
        gS, gell, gu = self.base.grad_from_moments(H0 + S0, H2 + S2, params)
        return np.concatenate([gS, gell.ravel(), gu, np.zeros_like(params.log_noise_var)])


def assemble(dataset: Dataset, spec: ModelSpec, params: KernelParams):
    """Mean vector and covariance matrix over all training points.

    Blocks are output-major, matching ``dataset.y``. Only the noise-free
    covariance is returned; see :func:`ncmogp.inference.noise_diag`.

    Raises
    ------
    NumericalError
        On non-finite entries, naming the outputs ``(d, d')`` and the
        within-output point indices ``(n, m)``.
    """
    engine = spec.engine()
    X, o = dataset.X, dataset.outputs
    mu = engine.mean(X, o, params)
    K = engine.cov(X, o, X, o, params)
    _check_finite(K, o, o)
    if not np.all(np.isfinite(mu)):
        n = int(np.argmin(np.isfinite(mu)))
        raise NumericalError(f"non-finite mean for output {int(o[n])}", {"d": int(o[n]), "n": n})
    # the upper triangle is authoritative
    K = np.triu(K) + np.triu(K, 1).T
    return mu, K
