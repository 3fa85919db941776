"""Periodic grids on flat complex tori and exact spectral derivatives.

A lattice of complex dimension ``n`` carries ``2n`` real axes ordered
``(x^1, y^1, ..., x^n, y^n)`` with ``z^j = x^j + i y^j``.  Fields are plain
real ``ndarray`` objects of shape ``lattice.shape``.

Fourier convention::

    f(x) = sum_k c(k) exp(2 pi i k.x / L)

so ``forward_transform`` is ``fftn(f) / N**(2n)``.  Wirtinger derivatives
act by multiplication with

    d_j    -> (i kx_j + ky_j) / 2
    dbar_j -> (i kx_j - ky_j) / 2

where ``k = 2 pi m / L``.  The Nyquist wavenumber is set to zero in the
first-derivative symbol, so every derivative operator in the package is a
product of these commuting multipliers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
import scipy.fft

__all__ = [
    "TorusLattice",
    "UnsupportedOrderError",
    "forward_transform",
    "inverse_transform",
    "spectral_derivative",
    "complex_derivative",
    "real_derivative",
    "dd_bar",
    "dd_bar_hat",
    "two_thirds_filter",
    "MAX_DERIVATIVE_ORDER",
]

MAX_DERIVATIVE_ORDER = 4


class UnsupportedOrderError(ValueError):
    """A derivative of total order above ``MAX_DERIVATIVE_ORDER`` was requested."""


def _workers() -> int:
    value = os.environ.get("CALABI_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusLattice:
    """Uniform periodic grid on ``[0, L)^{2n}``.

    Parameters
    ----------
    n : int
        Complex dimension, 1 or 2.
    N : int
        Points per real axis; a power of two, at least 8.
    L : float
        Period of every real axis.
    """

    n: int
    N: int
    L: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension n must be 1 or 2, got {self.n}")
        N = int(self.N)
        if N < 8 or N & (N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"period L must be positive, got {self.L}")

    @property
    def real_dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.real_dim

    @property
    def size(self) -> int:
        return self.N ** self.real_dim

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.real_dim

    def coordinates(self) -> list[np.ndarray]:
        """Coordinate arrays ``[x1, y1, ...]`` broadcast to the full grid."""
        x = np.arange(self.N) * self.spacing
        return np.meshgrid(*([x] * self.real_dim), indexing="ij")

    def _axis_view(self, vec: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.real_dim
        shape[axis] = self.N
        return vec.reshape(shape)

    @cached_property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Integer frequencies per axis in wrap-around order, broadcastable."""
        m = np.rint(np.fft.fftfreq(self.N, d=1.0 / self.N)).astype(int)
        return tuple(self._axis_view(m, a) for a in range(self.real_dim))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """First-derivative wavenumbers ``2 pi m / L`` with the Nyquist entry zeroed."""
        m = np.fft.fftfreq(self.N, d=1.0 / self.N)
        k = 2.0 * np.pi * m / self.L
        k[self.N // 2] = 0.0
        return tuple(self._axis_view(k, a) for a in range(self.real_dim))

    @cached_property
    def holo_symbols(self) -> tuple[np.ndarray, ...]:
        k = self.wavenumbers
        return tuple(0.5 * (1j * k[2 * j] + k[2 * j + 1]) for j in range(self.n))

    @cached_property
    def antiholo_symbols(self) -> tuple[np.ndarray, ...]:
        k = self.wavenumbers
        return tuple(0.5 * (1j * k[2 * j] - k[2 * j + 1]) for j in range(self.n))

    def mode(self, freq: Sequence[int], amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
        """``amplitude * cos(2 pi freq.x / L + phase)`` sampled on the grid."""
        freq = tuple(int(f) for f in freq)
        if len(freq) != self.real_dim:
            raise ValueError(f"frequency vector needs {self.real_dim} entries, got {len(freq)}")
        arg = np.zeros(self.shape)
        for a, (f, x) in enumerate(zip(freq, self.coordinates())):
            if f:
                arg = arg + f * x
        return amplitude * np.cos(2.0 * np.pi * arg / self.L + phase)


def forward_transform(lattice: TorusLattice, f: np.ndarray) -> np.ndarray:
    """Fourier coefficients ``c(k)`` of a grid field."""
    return scipy.fft.fftn(f, workers=_workers()) / lattice.size


def inverse_transform(lattice: TorusLattice, c: np.ndarray, real: bool = True) -> np.ndarray:
    """Grid values from Fourier coefficients; ``real=True`` drops the imaginary residue."""
    out = scipy.fft.ifftn(c * lattice.size, workers=_workers())
    return out.real if real else out


def _check_indices(lattice: TorusLattice, holo, antiholo) -> None:
    order = len(holo) + len(antiholo)
    if order > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {order} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}"
        )
    for i in (*holo, *antiholo):
        if not 0 <= i < lattice.n:
            raise IndexError(f"complex index {i} out of range for n={lattice.n}")


def _symbol(lattice: TorusLattice, holo: Sequence[int], antiholo: Sequence[int]):
    sym = 1.0
    for i in holo:
        sym = sym * lattice.holo_symbols[i]
    for j in antiholo:
        sym = sym * lattice.antiholo_symbols[j]
    return sym


def spectral_derivative(
    lattice: TorusLattice,
    coeffs: np.ndarray,
    holo: Sequence[int] = (),
    antiholo: Sequence[int] = (),
) -> np.ndarray:
    """Complex grid values of ``d_{holo...} dbar_{antiholo...} f`` from coefficients of ``f``.

    Indices are zero-based complex coordinate indices.
    """
    _check_indices(lattice, holo, antiholo)
    if not holo and not antiholo:
        return inverse_transform(lattice, coeffs, real=False)
    return inverse_transform(lattice, coeffs * _symbol(lattice, holo, antiholo), real=False)


def complex_derivative(
    lattice: TorusLattice,
    f: np.ndarray,
    holo: Sequence[int] = (),
    antiholo: Sequence[int] = (),
) -> np.ndarray:
    """Wirtinger derivative of a real field; result is complex (real and imaginary parts)."""
    return spectral_derivative(lattice, forward_transform(lattice, f), holo, antiholo)


def real_derivative(lattice: TorusLattice, coeffs: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Real coordinate derivative along the listed real axes (repeats allowed)."""
    if len(axes) > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {len(axes)} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}"
        )
    sym = 1.0
    for a in axes:
        sym = sym * (1j * lattice.wavenumbers[a])
    return inverse_transform(lattice, coeffs * sym)


def real_multi_indices(real_dim: int, order: int) -> list[tuple[int, ...]]:
    """Distinct partial derivatives of a given order, as sorted axis tuples."""
    return list(combinations_with_replacement(range(real_dim), order))


def dd_bar_hat(lattice: TorusLattice, coeffs: np.ndarray) -> np.ndarray:
    """``d_i dbar_j f`` from coefficients; exactly Hermitian, shape ``(*grid, n, n)``."""
    n = lattice.n
    out = np.empty(lattice.shape + (n, n), dtype=complex)
    for i in range(n):
        out[..., i, i] = spectral_derivative(lattice, coeffs, (i,), (i,)).real
        for j in range(i + 1, n):
            h = spectral_derivative(lattice, coeffs, (i,), (j,))
            out[..., i, j] = h
            out[..., j, i] = np.conj(h)
    return out


def dd_bar(lattice: TorusLattice, phi: np.ndarray) -> np.ndarray:
    """Pointwise complex Hessian ``H[..., i, j] = d_i dbar_j phi``."""
    return dd_bar_hat(lattice, forward_transform(lattice, phi))


def two_thirds_filter(lattice: TorusLattice, coeffs: np.ndarray) -> np.ndarray:
    """Zero every mode with some ``|m| > N/3`` (2/3-rule truncation)."""
    cut = lattice.N / 3.0
    keep = np.ones(lattice.shape, dtype=bool)
    for m in lattice.frequencies:
        keep = keep & (np.abs(m) <= cut)
    return coeffs * keep
