"""Product moments of zero-mean jointly Gaussian variables.

The expected value of ``prod_k X_k**a_k`` is a sum over the set ``T_a`` of
symmetric non-negative integer matrices ``L`` whose row condition

    a_k - l_kk - sum_j l_jk == 0        (k = 1..c)

holds, i.e. every variable ``k`` is used exactly ``a_k`` times, with a diagonal
entry counting twice. For all-ones exponents the matrices are the perfect
pairings of ``{1..c}`` and the moment reduces to a hafnian.

All factorial arithmetic is done in log-gamma space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import exp, lgamma, log
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ExponentVector",
    "MomentMatrix",
    "enumerate_moment_matrices",
    "log_moment_coefficient",
    "product_moment",
    "product_moment_unit",
    "pair_moment_coefficient",
    "pairings",
]

_LOG2 = log(2.0)


@dataclass(frozen=True)
class ExponentVector:
    """Exponents ``a_k`` of the Gaussian variables in a product moment."""

    a: tuple[int, ...]
    total: int = field(init=False)

    def __post_init__(self):
        a = tuple(int(v) for v in self.a)
        if len(a) < 1:
            raise ValueError("exponent vector must have at least one entry")
        if any(v < 0 for v in a):
            raise ValueError(f"exponents must be non-negative, got {a}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "total", sum(a))

    def __len__(self):
        return len(self.a)

    def __iter__(self):
        return iter(self.a)

    @classmethod
    def coerce(cls, a) -> "ExponentVector":
        return a if isinstance(a, cls) else cls(tuple(a))


@dataclass(frozen=True)
class MomentMatrix:
    """Symmetric non-negative integer ``c x c`` matrix stored as its upper triangle.

    ``upper`` holds ``l_ij`` for ``i <= j`` in row-major order.
    """

    c: int
    upper: tuple[int, ...]

    def __post_init__(self):
        if len(self.upper) != self.c * (self.c + 1) // 2:
            raise ValueError("upper triangle has the wrong length")

    def __getitem__(self, ij):
        i, j = ij
        if i > j:
            i, j = j, i
        return self.upper[_tri_index(self.c, i, j)]

    @property
    def trace(self) -> int:
        return sum(self[i, i] for i in range(self.c))

    def entries(self) -> Iterable[tuple[int, int, int]]:
        """Yield ``(i, j, l_ij)`` for ``i <= j`` with non-zero ``l_ij``."""
        pos = 0
        for i in range(self.c):
            for j in range(i, self.c):
                v = self.upper[pos]
                if v:
                    yield i, j, v
                pos += 1

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.c, self.c), dtype=int)
        for i, j, v in self.entries():
            out[i, j] = out[j, i] = v
        return out

    def satisfies(self, a: Sequence[int]) -> bool:
        """Check the row condition against exponents ``a``."""
        if len(a) != self.c:
            return False
        for k in range(self.c):
            used = self[k, k] + sum(self[j, k] for j in range(self.c))
            if used != a[k]:
                return False
        return True


def _tri_index(c: int, i: int, j: int) -> int:
    return i * c - i * (i - 1) // 2 + (j - i)


@lru_cache(maxsize=None)
def _enumerate(a: tuple[int, ...]) -> tuple[MomentMatrix, ...]:
    c = len(a)
    if sum(a) % 2:
        return ()
    cells = [(i, j) for i in range(c) for j in range(i, c)]
    remaining = list(a)
    upper = [0] * len(cells)
    found: list[MomentMatrix] = []

    def visit(pos: int) -> None:
        if pos == len(cells):
            found.append(MomentMatrix(c, tuple(upper)))
            return
        i, j = cells[pos]
        last_in_row = j == c - 1
        if i == j:
            top = remaining[i] // 2
        else:
            top = min(remaining[i], remaining[j])
        for v in range(top + 1):
            if i == j:
                remaining[i] -= 2 * v
            else:
                remaining[i] -= v
                remaining[j] -= v
            # row i is closed once its last cell is placed
            if not last_in_row or remaining[i] == 0:
                upper[pos] = v
                visit(pos + 1)
            if i == j:
                remaining[i] += 2 * v
            else:
                remaining[i] += v
                remaining[j] += v
        upper[pos] = 0

    visit(0)
    found.sort(key=lambda m: m.upper)
    return tuple(found)


def enumerate_moment_matrices(a) -> tuple[MomentMatrix, ...]:
    """Return ``T_a`` in lexicographic order of the flattened upper triangle.

    The result is cached per exponent tuple; the cache is an ``lru_cache`` and
    is safe to share between threads.

    Examples
    --------
    >>> [m.upper for m in enumerate_moment_matrices([3, 3])]
    [(0, 3, 0), (1, 1, 1)]
    """
    return _enumerate(ExponentVector.coerce(a).a)


def log_moment_coefficient(a: Sequence[int], L: MomentMatrix) -> float:
    """``log( prod_k a_k! / (2**tr(L) prod_{i<=j} l_ij!) )``."""
    val = sum(lgamma(ak + 1) for ak in a) - L.trace * _LOG2
    val -= sum(lgamma(v + 1) for _, _, v in L.entries())
    return val


def _as_table(phi, c: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (c, c):
        raise ValueError(
            f"covariance table has shape {phi.shape}, expected {(c, c)}"
        )
    return phi


def _monomial(phi: np.ndarray, L: MomentMatrix) -> float:
    out = 1.0
    for i, j, v in L.entries():
        out *= phi[i, j] ** v
    return out


def product_moment(a, phi) -> float:
    """``E[prod_k X_k**a_k]`` for zero-mean Gaussians with covariance ``phi``.

    Parameters
    ----------
    a : sequence of int
        Non-negative exponents, one per variable.
    phi : (c, c) array_like
        Covariance table. Only the upper triangle is read.

    Returns
    -------
    float
        The moment; exactly ``0.0`` when ``sum(a)`` is odd.
    """
    a = ExponentVector.coerce(a)
    phi = _as_table(phi, len(a))
    if a.total % 2:
        return 0.0
    total = 0.0
    for L in enumerate_moment_matrices(a):
        total += exp(log_moment_coefficient(a.a, L)) * _monomial(phi, L)
    return total


def product_moment_unit(c: int, phi) -> float:
    """``E[X_1 X_2 ... X_c]``, the sum over perfect pairings of ``phi`` entries."""
    if c < 1:
        raise ValueError("c must be positive")
    phi = _as_table(phi, c)
    if c % 2:
        return 0.0
    total = 0.0
    for L in enumerate_moment_matrices((1,) * c):
        total += _monomial(phi, L)
    return total


def pair_moment_coefficient(c: int, c2: int, L) -> float:
    """Log of ``A = c! c2! / (2**(l11 + l22) l11! l12! l22!)``.

    ``L`` is a 2x2 :class:`MomentMatrix` or a ``(l11, l12, l22)`` triple and
    must satisfy ``2 l11 + l12 == c`` and ``l12 + 2 l22 == c2``. The caller
    exponentiates.
    """
    l11, l12, l22 = L.upper if isinstance(L, MomentMatrix) else tuple(L)
    if min(l11, l12, l22) < 0 or 2 * l11 + l12 != c or l12 + 2 * l22 != c2:
        raise ValueError(
            f"(l11, l12, l22)={(l11, l12, l22)} is not in T_a for a={(c, c2)}"
        )
    return (
        lgamma(c + 1)
        + lgamma(c2 + 1)
        - (l11 + l22) * _LOG2
        - lgamma(l11 + 1)
        - lgamma(l12 + 1)
        - lgamma(l22 + 1)
    )


@lru_cache(maxsize=None)
def pairings(c: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Perfect pairings of ``range(c)`` read off ``T_a`` for all-ones ``a``."""
    if c == 0:
        return ((),)
    out = []
    for L in enumerate_moment_matrices((1,) * c):
        out.append(tuple((i, j) for i, j, _ in L.entries()))
    return tuple(out)
