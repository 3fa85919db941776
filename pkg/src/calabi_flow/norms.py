"""Discrete Hölder-norm surrogates, interpolation monitors and decay fits.

``holder_norm(f, k)`` is

    sum_{|b| <= k} sup |D^b f|  +  sum_{|b| = k} [D^b f]_alpha

over distinct real partial derivatives ``D^b`` (spectral).  The seminorm
``[u]_alpha`` is the largest quotient ``|u(p) - u(q)| / dist(p, q)^alpha`` over
admissible pairs: ``p`` runs over the subgrid with spacing ``pair_stride``
cells and ``q = p + m d`` where ``d`` is a lattice direction with entries in
``{-1, 0, 1}`` and ``m`` a multiple of ``pair_stride`` not exceeding
``max_separation``.  Distances are flat torus distances.  Because separations
and strides are counted in cells scaled with ``N``, refining the grid keeps
the sampled physical pairs fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .lattice import (
    TorusLattice,
    UnsupportedOrderError,
    forward_transform,
    real_derivative,
    real_multi_indices,
)

__all__ = [
    "HolderParams",
    "TrajectoryNorms",
    "holder_norm",
    "holder_seminorm",
    "derivative_stack",
    "interpolation_ratio",
    "weighted_trajectory_norm",
    "fit_exponential_decay",
]


@dataclass(frozen=True)
class HolderParams:
    alpha: float = 0.5
    pair_stride: int | None = None
    max_separation: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.pair_stride is not None and self.pair_stride < 1:
            raise ValueError("pair_stride must be >= 1")
        if self.max_separation is not None and self.max_separation < 1:
            raise ValueError("max_separation must be >= 1")

    def resolved(self, lattice: TorusLattice) -> tuple[int, int]:
        stride = self.pair_stride or max(1, lattice.N // 32)
        sep = self.max_separation or lattice.N // 4
        return stride, sep


def _directions(real_dim: int) -> list[tuple[int, ...]]:
    """Nonzero vectors in {-1,0,1}^d, one representative per +/- pair."""
    out = []
    for d in product((-1, 0, 1), repeat=real_dim):
        nz = [c for c in d if c]
        if nz and nz[0] > 0:
            out.append(d)
    return out


def _offsets(lattice: TorusLattice, stride: int, sep: int):
    h = lattice.spacing
    N = lattice.N
    for d in _directions(lattice.real_dim):
        for m in range(stride, sep + 1, stride):
            cells = tuple(m * c for c in d)
            wrapped = [min(abs(c) % N, N - abs(c) % N) for c in cells]
            dist = h * float(np.sqrt(sum(w * w for w in wrapped)))
            if dist > 0:
                yield cells, dist


def derivative_stack(lattice: TorusLattice, f: np.ndarray, order: int, coeffs=None) -> np.ndarray:
    """All distinct real partial derivatives of one order, stacked on axis 0."""
    if coeffs is None:
        coeffs = forward_transform(lattice, f)
    return np.stack([real_derivative(lattice, coeffs, idx) for idx in real_multi_indices(lattice.real_dim, order)])


def holder_seminorm(
    lattice: TorusLattice,
    fields: np.ndarray,
    params: HolderParams = HolderParams(),
    exhaustive: bool = False,
) -> float:
    """Sum over stacked components of the sampled alpha-seminorm.

    ``exhaustive=True`` enumerates point pairs one base point at a time; it is
    the slow reference path for small grids.
    """
    fields = np.asarray(fields, dtype=float)
    if fields.ndim == lattice.real_dim:
        fields = fields[None]
    stride, sep = params.resolved(lattice)
    if exhaustive:
        return float(np.sum(_seminorm_by_points(lattice, fields, stride, sep, params.alpha)))
    d = lattice.real_dim
    n_comp = fields.shape[0]
    # wrap-pad once so every shifted copy is a strided view
    padded = np.pad(fields, [(0, 0)] + [(sep, sep)] * d, mode="wrap")
    N = lattice.N
    base = fields[(slice(None),) + (slice(None, None, stride),) * d]
    best = np.zeros(n_comp)
    for cells, dist in _offsets(lattice, stride, sep):
        view = padded[(slice(None),) + tuple(slice(sep + c, sep + c + N, stride) for c in cells)]
        q = np.abs(base - view).reshape(n_comp, -1).max(axis=1) / dist**params.alpha
        best = np.maximum(best, q)
    return float(np.sum(best))


def _seminorm_by_points(lattice, fields, stride, sep, alpha):
    N = lattice.N
    offs = list(_offsets(lattice, stride, sep))
    cells = np.array([c for c, _ in offs])
    dists = np.array([d for _, d in offs]) ** alpha
    best = np.zeros(fields.shape[0])
    grid = [range(0, N, stride)] * lattice.real_dim
    for p in product(*grid):
        q = (np.array(p)[None, :] + cells) % N
        here = fields[(slice(None),) + p]
        there = fields[(slice(None),) + tuple(q.T)]
        quot = np.abs(there - here[:, None]) / dists[None, :]
        best = np.maximum(best, quot.max(axis=1))
    return best


def holder_norm(
    lattice: TorusLattice,
    f: np.ndarray,
    k: int,
    params: HolderParams = HolderParams(),
    exhaustive: bool = False,
) -> float:
    """Discrete ``c^{k, alpha}`` norm surrogate, ``0 <= k <= 4``."""
    if not 0 <= k <= 4:
        raise UnsupportedOrderError(f"Hölder order {k} outside 0..4")
    coeffs = forward_transform(lattice, f)
    total = 0.0
    top = None
    for order in range(k + 1):
        stack = derivative_stack(lattice, f, order, coeffs)
        total += float(np.abs(stack).reshape(stack.shape[0], -1).max(axis=1).sum())
        top = stack
    return total + holder_seminorm(lattice, top, params, exhaustive)


def interpolation_ratio(lattice: TorusLattice, f: np.ndarray, params: HolderParams = HolderParams()) -> float:
    """``|f|_{3,a}^2 / (|f|_{2,a} |f|_{4,a})``."""
    n2 = holder_norm(lattice, f, 2, params)
    n4 = holder_norm(lattice, f, 4, params)
    if n2 == 0 or n4 == 0:
        raise ValueError("interpolation ratio undefined for the zero field")
    return holder_norm(lattice, f, 3, params) ** 2 / (n2 * n4)


@dataclass
class TrajectoryNorms:
    t: np.ndarray
    holder_2a: np.ndarray
    holder_4a: np.ndarray
    holder_dot_0a: np.ndarray
    weighted: np.ndarray
    running_sup: np.ndarray
    c_meas: float


def weighted_trajectory_norm(
    lattice: TorusLattice,
    times: Sequence[float],
    phis: Sequence[np.ndarray],
    phidots: Sequence[np.ndarray],
    params: HolderParams = HolderParams(),
) -> TrajectoryNorms:
    """Per-snapshot norms and the running sup of ``t^{1/2}(|dphi/dt|_{0,a} + |phi|_{4,a})``.

    ``c_meas`` divides the sup by ``|phi_0|_{2,a}`` (zero when that vanishes).
    """
    if len(times) == 0:
        raise ValueError("empty trajectory")
    if not len(times) == len(phis) == len(phidots):
        raise ValueError("times, phis and phidots differ in length")
    t = np.asarray(times, dtype=float)
    h2 = np.array([holder_norm(lattice, p, 2, params) for p in phis])
    h4 = np.array([holder_norm(lattice, p, 4, params) for p in phis])
    hd = np.array([holder_norm(lattice, d, 0, params) for d in phidots])
    weighted = np.sqrt(np.maximum(t, 0.0)) * (hd + h4)
    running = np.maximum.accumulate(weighted)
    c_meas = float(running[-1] / h2[0]) if h2[0] > 0 else 0.0
    return TrajectoryNorms(t, h2, h4, hd, weighted, running, c_meas)


def fit_exponential_decay(series) -> tuple[float, float]:
    """Least-squares line through ``(t, log v)``; returns ``(rate, r_squared)``."""
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, value) pairs")
    if data.shape[0] < 5:
        raise ValueError(f"need at least 5 points, got {data.shape[0]}")
    t, v = data[:, 0], data[:, 1]
    if np.any(~(v > 0)):
        raise ValueError("exponential fit needs strictly positive values")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(-slope), r2
