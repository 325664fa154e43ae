"""Synthetic three-output benchmark with a known cubic Volterra structure.

Each output is a causal convolution ``f_d(t) = int_0^t G_d(t - s) u(s) ds``
of ``u(t) = sum_{k=1..4} cos(2 k pi t) / k**2`` with
``G_d(s) = S_d exp(-P_d s**2)``; the observed signal is
``f_d + f_d**2 + f_d**3`` plus Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


@dataclass(frozen=True)
class ToySpec:
    sensitivity: tuple = (5.0, 1.0, 2.0)
    precision: tuple = (200.0, 0.1, 100.0)
    n_points: int = 200
    domain: tuple = (0.0, 1.0)
    n_train: int = 50
    noise_scale: float = 0.005
    powers: tuple = (1, 2, 3)
    latent_terms: int = 4
    refine: int = 50

    def __post_init__(self):
        if len(self.sensitivity) != len(self.precision):
            raise ValueError("sensitivity and precision lengths differ")
        if self.n_points < 2 or not 0 < self.n_train < self.n_points:
            raise ValueError("need 0 < n_train < n_points and n_points >= 2")
        if self.refine < 1 or self.noise_scale < 0:
            raise ValueError("refine must be >= 1 and noise_scale >= 0")
        if not self.powers or min(self.powers) < 1:
            raise ValueError("powers must be positive integers")

    @property
    def n_outputs(self) -> int:
        return len(self.sensitivity)


def latent_signal(t, terms: int = 4):
    t = np.asarray(t, dtype=float)
    k = np.arange(1, terms + 1)
    return np.sum(np.cos(2.0 * np.pi * np.multiply.outer(t, k)) / k**2, axis=-1)


def causal_convolution(spec: ToySpec, refine: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid evaluation of the causal convolution on the output grid.

    The quadrature grid subdivides each output interval into ``refine``
    steps, so every output location is a quadrature node.

    Returns ``t`` (``n_points``) and ``f`` (``D x n_points``).
    """
    refine = spec.refine if refine is None else refine
    lo, hi = spec.domain
    n = spec.n_points
    t = np.linspace(lo, hi, n)
    h = (hi - lo) / ((n - 1) * refine)
    tau = lo + h * np.arange((n - 1) * refine + 1)
    u = latent_signal(tau, spec.latent_terms)
    end = np.arange(n) * refine
    k = np.arange(tau.shape[0])
    w = np.where(k[None, :] < end[:, None], h, 0.0)
    w[:, 0] = np.where(end > 0, h / 2, 0.0)
    rows = np.nonzero(end > 0)[0]
    w[rows, end[rows]] = h / 2
    f = np.empty((spec.n_outputs, n))
    for d, (S, P) in enumerate(zip(spec.sensitivity, spec.precision)):
        G = S * np.exp(-P * (t[:, None] - tau[None, :]) ** 2)
        f[d] = (w * G) @ u
    return t, f


@dataclass
class ToyData:
    t: np.ndarray
    clean: np.ndarray
    noise_var: np.ndarray
    full: Dataset

    def split(self, seed: int, n_train: int) -> tuple[Dataset, Dataset]:
        """Random per-output train/test partition of the full grid."""
        rng = np.random.default_rng(seed)
        train_idx, test_idx = [], []
        for _ in range(self.full.n_outputs):
            perm = rng.permutation(self.t.shape[0])
            train_idx.append(np.sort(perm[:n_train]))
            test_idx.append(np.sort(perm[n_train:]))
        return self.full.subset(train_idx), self.full.subset(test_idx)


def toy_generate(spec: ToySpec = ToySpec(), seed: int = 0) -> ToyData:
    """Noisy toy observations on the full grid; see :meth:`ToyData.split`."""
    t, f = causal_convolution(spec)
    clean = sum(f**c for c in spec.powers)
    noise_var = spec.noise_scale * np.var(clean, axis=1)
    rng = np.random.default_rng(seed)
    y = clean + rng.standard_normal(clean.shape) * np.sqrt(noise_var)[:, None]
    full = Dataset(
        [t[:, None] for _ in range(spec.n_outputs)],
        list(y),
        [f"y{d + 1}" for d in range(spec.n_outputs)],
    )
    return ToyData(t, clean, noise_var, full)
