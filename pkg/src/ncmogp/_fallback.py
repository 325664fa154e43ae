"""Pure-numpy implementations of the hot kernels in ``_core.pyx``.

Signatures and results match the compiled module exactly (up to rounding).
"""
import numpy as np

NAME = "python"


def eq_gram(X1, o1, X2, o2, amp, inv2v):
    """``amp[o1, o2] * exp(-sum_q r_q**2 * inv2v[o1, o2, q])`` for all pairs."""
    r = o1[:, None]
    c = o2[None, :]
    expo = np.zeros((X1.shape[0], X2.shape[0]))
    for q in range(X1.shape[1]):
        expo += (X1[:, None, q] - X2[None, :, q]) ** 2 * inv2v[r, c, q]
    return amp[r, c] * np.exp(-expo)


def eq_moments(G, X1, o1, X2, o2, amp_unit, inv2v):
    """Adjoint tables ``H0[a, b] = sum G h`` and ``H2[a, b, q] = sum G h r_q**2``."""
    K = amp_unit.shape[0]
    p = X1.shape[1]
    r = o1[:, None]
    c = o2[None, :]
    expo = np.zeros((X1.shape[0], X2.shape[0]))
    r2 = []
    for q in range(p):
        dq = (X1[:, None, q] - X2[None, :, q]) ** 2
        r2.append(dq)
        expo += dq * inv2v[r, c, q]
    Gh = (G * amp_unit[r, c] * np.exp(-expo)).ravel()
    code = (r * K + c).ravel()
    H0 = np.bincount(code, weights=Gh, minlength=K * K).reshape(K, K)
    H2 = np.empty((K, K, p))
    for q in range(p):
        H2[:, :, q] = np.bincount(
            code, weights=Gh * r2[q].ravel(), minlength=K * K
        ).reshape(K, K)
    return H0, H2


def volterra_cov(kappa, U, V):
    """``sum_j kappa**(j+1) * U[j, n] * V[j, m]``."""
    out = np.zeros_like(kappa)
    power = np.ones_like(kappa)
    for j in range(U.shape[0]):
        power = power * kappa
        out += power * U[j][:, None] * V[j][None, :]
    return out


def volterra_adjoint(Gbar, kappa, U, V, dU, dV):
    """Reverse-mode partials of :func:`volterra_cov` contracted with ``Gbar``.

    Returns ``(G_kappa, g_rows, g_cols)`` where ``g_rows[n]`` is the
    derivative through the row coefficients ``U[:, n]`` (given their
    derivatives ``dU``) and likewise for columns.
    """
    Gk = np.zeros_like(kappa)
    ga = np.zeros(kappa.shape[0])
    gb = np.zeros(kappa.shape[1])
    prev = np.ones_like(kappa)
    for j in range(U.shape[0]):
        Gk += (j + 1) * prev * U[j][:, None] * V[j][None, :]
        power = prev * kappa
        W = Gbar * power
        ga += dU[j] * (W @ V[j])
        gb += dV[j] * (U[j] @ W)
        prev = power
    return Gbar * Gk, ga, gb
