"""Ricci, scalar and full curvature of Kähler metrics on the torus chart.

``log det g`` is formed pointwise and then differentiated spectrally.  The
full tensor uses spectral derivatives of the metric components:

    R_{i jbar k lbar} = -d_i dbar_j g_{k lbar} + g^{p qbar} (d_i g_{k qbar}) (dbar_j g_{p lbar})

and ``|Rm|^2`` contracts it against itself with ``g^{..}`` on all four index
pairs.  With this convention ``|Rm| = |R|`` on Riemann surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import dd_bar_hat, forward_transform, spectral_derivative
from .metric import MetricField, inverse_and_det, upper

__all__ = [
    "CurvatureReport",
    "ricci",
    "scalar_curvature",
    "average_scalar",
    "calabi_energy",
    "riemann_tensor",
    "riemann_norm",
    "curvature_report",
    "RIEMANN_CONVENTION_N1",
]

# |Rm|^2 / R^2 on Riemann surfaces for the contraction used here.
RIEMANN_CONVENTION_N1 = 1.0


@dataclass
class CurvatureReport:
    ricci: MetricField
    scalar: np.ndarray
    rbar: float
    calabi_energy: float
    max_riemann: float


def ricci(g: MetricField) -> MetricField:
    """``R_{i jbar} = -d_i dbar_j log det g``."""
    _, det = inverse_and_det(g)
    lat = g.lattice
    return MetricField(lat, -dd_bar_hat(lat, forward_transform(lat, np.log(det))))


def _scalar_complex(g: MetricField) -> tuple[np.ndarray, np.ndarray]:
    g_inv, det = inverse_and_det(g)
    lat = g.lattice
    ric = -dd_bar_hat(lat, forward_transform(lat, np.log(det)))
    return np.einsum("...ij,...ij->...", upper(g_inv), ric), det


def scalar_curvature(g: MetricField) -> np.ndarray:
    """``R = g^{i jbar} R_{i jbar}`` as a real field."""
    return _scalar_complex(g)[0].real


def average_scalar(g: MetricField, scalar: np.ndarray | None = None) -> float:
    """Volume-weighted mean of the scalar curvature."""
    _, det = inverse_and_det(g)
    if scalar is None:
        scalar = scalar_curvature(g)
    return float(np.sum(scalar * det) / np.sum(det))


def calabi_energy(g: MetricField, rbar: float, scalar: np.ndarray | None = None) -> float:
    """``sum (R - rbar)^2 det g`` times the cell volume."""
    _, det = inverse_and_det(g)
    if scalar is None:
        scalar = scalar_curvature(g)
    return float(np.sum((scalar - rbar) ** 2 * det) * g.lattice.cell_volume)


def riemann_tensor(g: MetricField) -> np.ndarray:
    """Components ``Rm[..., i, j, k, l] = R_{i jbar k lbar}``."""
    g_inv, _ = inverse_and_det(g)
    gu = upper(g_inv)
    lat = g.lattice
    n = lat.n
    shape = lat.shape
    d1 = np.empty(shape + (n, n, n), dtype=complex)  # d_i g_{k qbar}
    d1b = np.empty(shape + (n, n, n), dtype=complex)  # dbar_j g_{p lbar}
    d2 = np.empty(shape + (n, n, n, n), dtype=complex)  # d_i dbar_j g_{k lbar}
    for k in range(n):
        for l in range(n):
            c = forward_transform(lat, g.values[..., k, l])
            for i in range(n):
                d1[..., i, k, l] = spectral_derivative(lat, c, (i,), ())
                d1b[..., i, k, l] = spectral_derivative(lat, c, (), (i,))
                for j in range(n):
                    d2[..., i, j, k, l] = spectral_derivative(lat, c, (i,), (j,))
    quad = np.einsum("...pq,...ikq,...jpl->...ijkl", gu, d1, d1b, optimize=True)
    return quad - d2


def riemann_norm(g: MetricField) -> np.ndarray:
    """Pointwise ``|Rm| >= 0``."""
    rm = riemann_tensor(g)
    g_inv, _ = inverse_and_det(g)
    gu = upper(g_inv)
    sq = np.einsum(
        "...ijkl,...abcd,...ia,...bj,...kc,...dl->...",
        rm,
        np.conj(rm),
        gu,
        gu,
        gu,
        gu,
        optimize=True,
    )
    return np.sqrt(np.maximum(sq.real, 0.0))


def curvature_report(g: MetricField, rbar: float | None = None) -> CurvatureReport:
    """Bundle of curvature quantities; ``rbar`` defaults to the metric's own average."""
    scalar = scalar_curvature(g)
    mean = average_scalar(g, scalar)
    if rbar is None:
        rbar = mean
    return CurvatureReport(
        ricci=ricci(g),
        scalar=scalar,
        rbar=mean,
        calabi_energy=calabi_energy(g, rbar, scalar),
        max_riemann=float(np.max(riemann_norm(g))),
    )
