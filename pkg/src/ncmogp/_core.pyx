# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: EQ-family Gram matrices and the Volterra polynomial.

Drop-in replacements for the functions in ``_fallback``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def eq_gram(double[:, ::1] X1, cnp.intp_t[::1] o1, double[:, ::1] X2,
            cnp.intp_t[::1] o2, double[:, ::1] amp, double[:, :, ::1] inv2v):
    cdef Py_ssize_t n = X1.shape[0], m = X2.shape[0], p = X1.shape[1]
    cdef Py_ssize_t i, j, q, a, b
    cdef double s, r
    out = np.empty((n, m))
    cdef double[:, ::1] K = out
    with nogil:
        for i in range(n):
            a = o1[i]
            for j in range(m):
                b = o2[j]
                s = 0.0
                for q in range(p):
                    r = X1[i, q] - X2[j, q]
                    s = s + r * r * inv2v[a, b, q]
                K[i, j] = amp[a, b] * exp(-s)
    return out


def eq_moments(double[:, ::1] G, double[:, ::1] X1, cnp.intp_t[::1] o1,
               double[:, ::1] X2, cnp.intp_t[::1] o2, double[:, ::1] amp_unit,
               double[:, :, ::1] inv2v):
    cdef Py_ssize_t n = X1.shape[0], m = X2.shape[0], p = X1.shape[1]
    cdef Py_ssize_t nk = amp_unit.shape[0]
    cdef Py_ssize_t i, j, q, a, b
    cdef double s, r, gh
    H0a = np.zeros((nk, nk))
    H2a = np.zeros((nk, nk, p))
    rowa = np.empty(p)
    cdef double[:, ::1] H0 = H0a
    cdef double[:, :, ::1] H2 = H2a
    cdef double[::1] r2 = rowa
    with nogil:
        for i in range(n):
            a = o1[i]
            for j in range(m):
                if G[i, j] == 0.0:
                    continue
                b = o2[j]
                s = 0.0
                for q in range(p):
                    r = X1[i, q] - X2[j, q]
                    r2[q] = r * r
                    s = s + r2[q] * inv2v[a, b, q]
                gh = G[i, j] * amp_unit[a, b] * exp(-s)
                H0[a, b] += gh
                for q in range(p):
                    H2[a, b, q] += gh * r2[q]
    return H0a, H2a


def volterra_cov(double[:, ::1] kappa, double[:, ::1] U, double[:, ::1] V):
    cdef Py_ssize_t n = kappa.shape[0], m = kappa.shape[1], J = U.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double x, pw, acc
    out = np.empty((n, m))
    cdef double[:, ::1] K = out
    with nogil:
        for i in range(n):
            for j in range(m):
                x = kappa[i, j]
                pw = 1.0
                acc = 0.0
                for k in range(J):
                    pw = pw * x
                    acc = acc + pw * U[k, i] * V[k, j]
                K[i, j] = acc
    return out


def volterra_adjoint(double[:, ::1] Gbar, double[:, ::1] kappa, double[:, ::1] U,
                     double[:, ::1] V, double[:, ::1] dU, double[:, ::1] dV):
    cdef Py_ssize_t n = kappa.shape[0], m = kappa.shape[1], J = U.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double x, g, prev, pw, dk
    Gka = np.empty((n, m))
    gaa = np.zeros(n)
    gba = np.zeros(m)
    cdef double[:, ::1] Gk = Gka
    cdef double[::1] ga = gaa
    cdef double[::1] gb = gba
    with nogil:
        for i in range(n):
            for j in range(m):
                x = kappa[i, j]
                g = Gbar[i, j]
                prev = 1.0
                dk = 0.0
                for k in range(J):
                    dk = dk + (k + 1) * prev * U[k, i] * V[k, j]
                    pw = prev * x
                    ga[i] += dU[k, i] * g * pw * V[k, j]
                    gb[j] += dV[k, j] * g * pw * U[k, i]
                    prev = pw
                Gk[i, j] = g * dk
    return Gka, gaa, gba
