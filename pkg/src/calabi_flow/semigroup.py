"""Fourier realisation of ``exp(-tA)`` for ``A = (Delta_0)^2`` and the Duhamel operator.

``Delta_0 = g0^{i jbar} d_i dbar_j`` is the complex Laplacian of the flat
metric; its symbol ``sigma(k)`` is real and non-positive, and ``A`` acts on
mode ``k`` by ``lambda(k) = sigma(k)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TorusLattice, forward_transform, inverse_transform
from .metric import _validate_g0

__all__ = [
    "BilaplacianSymbol",
    "build_symbol",
    "semigroup_apply",
    "apply_generator",
    "phi1_coefficients",
    "duhamel_phi1",
    "smoothing_ladder",
    "smoothing_constant",
    "SERIES_THRESHOLD",
]

SERIES_THRESHOLD = 1e-5


@dataclass(frozen=True)
class BilaplacianSymbol:
    lattice: TorusLattice
    sigma: np.ndarray
    lam: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.lam.max())

    @property
    def lambda_min_positive(self) -> float:
        pos = self.lam[self.lam > 0]
        return float(pos.min()) if pos.size else 0.0

    def at(self, freq) -> float:
        """``lambda`` at an integer frequency vector."""
        N = self.lattice.N
        return float(self.lam[tuple(int(m) % N for m in freq)])


def build_symbol(lattice: TorusLattice, g0=None) -> BilaplacianSymbol:
    n = lattice.n
    g0 = np.eye(n, dtype=complex) if g0 is None else np.asarray(g0, dtype=complex).reshape(n, n)
    _validate_g0(g0)
    g0_up = np.linalg.inv(g0).T
    sigma = np.zeros(lattice.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            if g0_up[i, j] != 0:
                sigma = sigma + g0_up[i, j] * lattice.holo_symbols[i] * lattice.antiholo_symbols[j]
    sigma = np.broadcast_to(sigma.real, lattice.shape).copy()
    return BilaplacianSymbol(lattice, sigma, sigma**2)


def _check_time(t: float, strict: bool = False) -> None:
    if not np.isfinite(t) or t < 0 or (strict and t == 0):
        rel = "> 0" if strict else ">= 0"
        raise ValueError(f"time argument must be {rel}, got {t}")


def semigroup_apply(symbol: BilaplacianSymbol, x: np.ndarray, t: float) -> np.ndarray:
    """``exp(-tA) x``."""
    _check_time(t)
    lat = symbol.lattice
    if t == 0:
        return np.array(x, dtype=float, copy=True)
    return inverse_transform(lat, forward_transform(lat, x) * np.exp(-t * symbol.lam))


def apply_generator(symbol: BilaplacianSymbol, x: np.ndarray) -> np.ndarray:
    """``A x``."""
    lat = symbol.lattice
    return inverse_transform(lat, forward_transform(lat, x) * symbol.lam)


def phi1_coefficients(lam: np.ndarray, tau: float) -> np.ndarray:
    """``(1 - exp(-tau lam)) / lam`` with the limit ``tau`` at ``lam = 0``."""
    lam = np.asarray(lam, dtype=float)
    z = tau * lam
    small = z < SERIES_THRESHOLD
    out = np.empty_like(z)
    zs = z[small]
    out[small] = tau * (1.0 - zs / 2.0 + zs * zs / 6.0)
    out[~small] = -np.expm1(-z[~small]) / lam[~small]
    return out


def duhamel_phi1(symbol: BilaplacianSymbol, f: np.ndarray, tau: float) -> np.ndarray:
    """``int_0^tau exp(-(tau - s)A) f ds`` for a forcing constant in time."""
    _check_time(tau, strict=True)
    lat = symbol.lattice
    return inverse_transform(lat, forward_transform(lat, f) * phi1_coefficients(symbol.lam, tau))


def smoothing_ladder(symbol: BilaplacianSymbol, points: int = 32) -> np.ndarray:
    """Log-spaced ``s`` values spanning ``[1/lambda_max, 10/lambda_min+]``."""
    lo = 1.0 / symbol.lambda_max
    hi = 10.0 / symbol.lambda_min_positive
    return np.geomspace(lo, hi, points)


def smoothing_constant(symbol: BilaplacianSymbol, x: np.ndarray, ladder=None) -> float:
    """``max_s s^{1/2} ||A exp(-sA) x||_inf`` over the ladder."""
    if ladder is None:
        ladder = smoothing_ladder(symbol)
    lat = symbol.lattice
    c = forward_transform(lat, x) * symbol.lam
    best = 0.0
    for s in ladder:
        v = inverse_transform(lat, c * np.exp(-s * symbol.lam))
        best = max(best, float(np.sqrt(s) * np.max(np.abs(v))))
    return best
