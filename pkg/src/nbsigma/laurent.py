"""Finite Laurent polynomials used as bulk symbols of banded matrices.

Convention: ``f(beta) = sum_r c_r * beta**(-r)`` where ``c_r`` is the matrix
element ``<i+r| A |i>``, i.e. the amplitude for hopping ``r`` sites to the right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class LaurentSymbol:
    coeffs: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(r): complex(v) for r, v in dict(self.coeffs).items() if v != 0}
        object.__setattr__(self, "coeffs", clean)

    @property
    def range(self) -> int:
        return max((abs(r) for r in self.coeffs), default=0)

    @property
    def min_offset(self) -> int:
        return min(self.coeffs, default=0)

    @property
    def max_offset(self) -> int:
        return max(self.coeffs, default=0)

    def __call__(self, beta):
        beta = np.asarray(beta, dtype=complex)
        out = np.zeros_like(beta)
        for r in sorted(self.coeffs):
            out = out + self.coeffs[r] * beta ** (-r)
        return out if out.ndim else complex(out)

    def conj(self) -> "LaurentSymbol":
        """Symbol with conjugated coefficients, the symbol of ``A.conj()``."""
        return LaurentSymbol({r: np.conj(v) for r, v in self.coeffs.items()})

    def transpose(self) -> "LaurentSymbol":
        """Symbol of ``A.T``: ``f(1/beta)``."""
        return LaurentSymbol({-r: v for r, v in self.coeffs.items()})

    def scaled(self, s: complex) -> "LaurentSymbol":
        return LaurentSymbol({r: s * v for r, v in self.coeffs.items()})

    def __add__(self, other: "LaurentSymbol") -> "LaurentSymbol":
        out = dict(self.coeffs)
        for r, v in other.coeffs.items():
            out[r] = out.get(r, 0) + v
        return LaurentSymbol(out)

    def total(self) -> complex:
        return complex(sum(self.coeffs.values()))

    def is_real_symmetric(self, tol: float = 1e-14) -> bool:
        for r, v in self.coeffs.items():
            if abs(v.imag) > tol or abs(v - self.coeffs.get(-r, 0)) > tol:
                return False
        return True

    def to_matrix(self, n: int, boundary: str = "open") -> np.ndarray:
        """Banded Toeplitz (open) or circulant (periodic) matrix with this symbol."""
        a = np.zeros((n, n), dtype=complex)
        for r, v in self.coeffs.items():
            if boundary == "periodic":
                idx = np.arange(n)
                np.add.at(a, ((idx + r) % n, idx), v)
            else:
                if abs(r) >= n:
                    continue
                idx = np.arange(max(0, -r), min(n, n - r))
                a[idx + r, idx] += v
        return a

    @classmethod
    def from_matrix(cls, a: np.ndarray, column: int | None = None, max_range: int | None = None,
                    tol: float = 0.0) -> "LaurentSymbol":
        """Read the symbol off one column (default: the central column)."""
        n = a.shape[0]
        j = n // 2 if column is None else column
        rmax = n if max_range is None else max_range
        coeffs = {}
        for r in range(-rmax, rmax + 1):
            i = j + r
            if 0 <= i < n and abs(a[i, j]) > tol:
                coeffs[r] = a[i, j]
        return cls(coeffs)

    def allclose(self, other: "LaurentSymbol", atol: float = 1e-12) -> bool:
        keys = set(self.coeffs) | set(other.coeffs)
        return all(abs(self.coeffs.get(k, 0) - other.coeffs.get(k, 0)) <= atol for k in keys)


def hatano_nelson_symbol(t: float = 1.0, gamma: float = 0.5) -> LaurentSymbol:
    """Bulk damping-matrix symbol of the dissipative Hatano-Nelson chain."""
    return LaurentSymbol({0: -2 * gamma, -1: -1j * (t - gamma), 1: -1j * (t + gamma)})


def nnn_symbol(t: float = 1.0, gamma: float = 0.5, gamma0: float = 1.1, t2: float = 0.1) -> LaurentSymbol:
    """Bulk symbol with next-nearest-neighbour hopping and uniform on-site damping gamma0."""
    return LaurentSymbol({0: -gamma0, -1: -1j * (t - gamma), 1: -1j * (t + gamma),
                          2: -1j * t2, -2: -1j * t2})


def nearest_neighbor_interaction(u: float) -> LaurentSymbol:
    """U(beta) = u (beta + 1/beta)."""
    return LaurentSymbol({1: u, -1: u})
