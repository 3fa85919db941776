"""Kähler metrics on the torus chart: assembly, inverses, positivity, bounds.

A metric field stores ``g[..., i, j] = g_{i jbar}`` as complex ``n x n``
matrices at every grid point.  All pointwise linear algebra is closed form
(scalars for ``n = 1``, 2x2 Hermitian formulas for ``n = 2``).

Index convention used throughout the package: ``inverse_and_det`` returns the
matrix inverse ``G^{-1}``; the contravariant tensor ``g^{i jbar}`` (with
``g^{i jbar} g_{k jbar} = delta^i_k``) is its transpose, see :func:`upper`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import TorusLattice, dd_bar_hat, forward_transform

__all__ = [
    "InvalidMetricError",
    "MetricField",
    "ReferenceGeometry",
    "assemble_metric",
    "positivity_check",
    "pointwise_eigenvalues",
    "metric_bounds",
    "inverse_and_det",
    "upper",
    "total_volume",
    "PD_FLOOR",
]

PD_FLOOR = 1e-10


class InvalidMetricError(ValueError):
    """Raised when a metric that must be positive definite is not."""


@dataclass
class MetricField:
    """Hermitian matrix field on a lattice; ``values`` has shape ``(*grid, n, n)``."""

    lattice: TorusLattice
    values: np.ndarray

    def __post_init__(self):
        n = self.lattice.n
        if self.values.shape != self.lattice.shape + (n, n):
            raise ValueError(
                f"metric values have shape {self.values.shape}, "
                f"expected {self.lattice.shape + (n, n)}"
            )

    def __add__(self, other):
        if isinstance(other, MetricField):
            other = other.values
        return MetricField(self.lattice, self.values + other)

    def __mul__(self, scale):
        return MetricField(self.lattice, self.values * scale)

    __rmul__ = __mul__

    def hermitian_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))))

    @classmethod
    def constant(cls, lattice: TorusLattice, matrix) -> "MetricField":
        m = np.asarray(matrix, dtype=complex).reshape(lattice.n, lattice.n)
        return cls(lattice, np.broadcast_to(m, lattice.shape + m.shape).copy())


def _validate_g0(g0: np.ndarray) -> None:
    if not np.allclose(g0, g0.conj().T, rtol=0, atol=1e-14):
        raise InvalidMetricError("flat metric g0 is not Hermitian")
    if np.linalg.eigvalsh(g0).min() <= 0:
        raise InvalidMetricError("flat metric g0 is not positive definite")


@dataclass
class ReferenceGeometry:
    """Flat metric ``g0`` plus background potential ``psi``; the reference is ``g0 + ddbar psi``."""

    lattice: TorusLattice
    g0: np.ndarray = None
    psi: np.ndarray = None
    _psi_hat: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        n = self.lattice.n
        if self.g0 is None:
            self.g0 = np.eye(n, dtype=complex)
        self.g0 = np.asarray(self.g0, dtype=complex).reshape(n, n)
        _validate_g0(self.g0)
        if self.psi is None:
            self.psi = np.zeros(self.lattice.shape)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.shape != self.lattice.shape:
            raise ValueError("psi does not match the lattice shape")
        self._psi_hat = forward_transform(self.lattice, self.psi)

    @property
    def psi_hat(self) -> np.ndarray:
        return self._psi_hat

    @property
    def is_flat(self) -> bool:
        return not np.any(self.psi)

    def metric(self) -> MetricField:
        return assemble_metric(self, None)


def assemble_metric(ref: ReferenceGeometry, phi, phi_hat=None) -> MetricField:
    """``g_phi = g0 + ddbar(psi + phi)``; ``phi=None`` gives the reference metric."""
    lat = ref.lattice
    coeffs = ref.psi_hat
    if phi_hat is None and phi is not None:
        phi_hat = forward_transform(lat, phi)
    if phi_hat is not None:
        coeffs = coeffs + phi_hat
    return MetricField(lat, dd_bar_hat(lat, coeffs) + ref.g0)


def pointwise_eigenvalues(g: MetricField) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest eigenvalue at every grid point."""
    v = g.values
    if g.lattice.n == 1:
        lam = v[..., 0, 0].real
        return lam, lam
    a = v[..., 0, 0].real
    d = v[..., 1, 1].real
    b = v[..., 0, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt((0.5 * (a - d)) ** 2 + np.abs(b) ** 2)
    return mid - rad, mid + rad


def positivity_check(g: MetricField, pd_floor: float = PD_FLOOR) -> tuple[bool, float]:
    """Return ``(is_pd, min_eig)`` over the whole grid."""
    lo, _ = pointwise_eigenvalues(g)
    min_eig = float(np.min(lo))
    if not np.isfinite(min_eig):
        return False, min_eig
    return min_eig > pd_floor, min_eig


def _det(v: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return v[..., 0, 0].real
    return (v[..., 0, 0] * v[..., 1, 1] - v[..., 0, 1] * v[..., 1, 0]).real


def _require_pd(g: MetricField, pd_floor: float = PD_FLOOR) -> None:
    ok, min_eig = positivity_check(g, pd_floor)
    if not ok:
        raise InvalidMetricError(f"metric is not positive definite (min eigenvalue {min_eig:.3e})")


def metric_bounds(g: MetricField, g_ref: MetricField) -> tuple[float, float]:
    """Constants ``(c1, C2)`` with ``c1 g_ref <= g <= C2 g_ref`` pointwise.

    They are the extreme generalized eigenvalues of the pencil ``(g, g_ref)``.
    """
    _require_pd(g)
    _require_pd(g_ref)
    n = g.lattice.n
    a, b = g.values, g_ref.values
    if n == 1:
        mu = a[..., 0, 0].real / b[..., 0, 0].real
        return float(mu.min()), float(mu.max())
    # reduce to a standard problem with the Cholesky factor of b; the
    # Hermitian eigenvalue formula then has no cancelling discriminant
    l00 = np.sqrt(b[..., 0, 0].real)
    l10 = b[..., 1, 0] / l00
    l11 = np.sqrt(b[..., 1, 1].real - np.abs(l10) ** 2)
    linv = np.zeros_like(b)
    linv[..., 0, 0] = 1.0 / l00
    linv[..., 1, 0] = -l10 / (l00 * l11)
    linv[..., 1, 1] = 1.0 / l11
    m = np.einsum("...ij,...jk,...lk->...il", linv, a, np.conj(linv))
    lo, hi = pointwise_eigenvalues(MetricField(g.lattice, m))
    return float(np.min(lo)), float(np.max(hi))


def inverse_and_det(g: MetricField, check: bool = True) -> tuple[MetricField, np.ndarray]:
    """Pointwise matrix inverse and determinant."""
    if check:
        _require_pd(g)
    n = g.lattice.n
    v = g.values
    det = _det(v, n)
    inv = np.empty_like(v)
    if n == 1:
        inv[..., 0, 0] = 1.0 / det
    else:
        inv[..., 0, 0] = v[..., 1, 1] / det
        inv[..., 1, 1] = v[..., 0, 0] / det
        inv[..., 0, 1] = -v[..., 0, 1] / det
        inv[..., 1, 0] = -v[..., 1, 0] / det
    return MetricField(g.lattice, inv), det


def upper(g_inv: MetricField | np.ndarray) -> np.ndarray:
    """Contravariant components ``g^{i jbar}`` from the matrix inverse."""
    values = g_inv.values if isinstance(g_inv, MetricField) else g_inv
    return np.swapaxes(values, -1, -2)


def total_volume(g: MetricField) -> float:
    """Grid sum of ``det g`` times the cell volume."""
    return float(np.sum(_det(g.values, g.lattice.n)) * g.lattice.cell_volume)
